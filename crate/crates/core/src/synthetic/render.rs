//! Rasterizers for silhouette masks and colored skeletons.

use super::pose::{joint, Pose, BONES};

/// Capsule radii as fractions of the frame height.
const HEAD_RADIUS: f64 = 0.065;
const TORSO_RADIUS: f64 = 0.06;
const ARM_RADIUS: f64 = 0.03;
const LEG_RADIUS: f64 = 0.04;

/// Skeleton line half-width in pixels.
const LINE_HALF_WIDTH: f64 = 1.0;

/// Bone colors in RGB bytes, indexed like [`BONES`]. The figure's right
/// limbs use warm colors, the left limbs greens and blues.
pub const BONE_COLORS: [[u8; 3]; 13] = [
    [255, 0, 85],
    [255, 0, 0],
    [255, 85, 0],
    [255, 170, 0],
    [170, 255, 0],
    [85, 255, 0],
    [0, 255, 0],
    [0, 255, 85],
    [0, 255, 170],
    [0, 255, 255],
    [0, 170, 255],
    [0, 85, 255],
    [0, 0, 255],
];

fn to_pixels(p: [f64; 2], h: usize, w: usize) -> [f64; 2] {
    [p[0] * w as f64, p[1] * h as f64]
}

/// Distance from `q` to the segment `a`–`b`.
fn segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let aq = [q[0] - a[0], q[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((aq[0] * ab[0] + aq[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (aq[0] - t * ab[0]).hypot(aq[1] - t * ab[1])
}

/// Capsules `(a, b, radius_px)` making up the body.
fn capsules(pose: &Pose, h: usize, w: usize) -> Vec<([f64; 2], [f64; 2], f64)> {
    use joint::*;
    let px = |i: usize| to_pixels(pose.joints[i], h, w);
    let r = |f: f64| f * h as f64;
    let mut out = vec![
        (px(HEAD), px(HEAD), r(HEAD_RADIUS)),
        (px(NECK), px(R_HIP), r(TORSO_RADIUS)),
        (px(NECK), px(L_HIP), r(TORSO_RADIUS)),
        (px(R_HIP), px(L_HIP), r(TORSO_RADIUS)),
        (px(R_SHOULDER), px(L_SHOULDER), r(ARM_RADIUS)),
    ];
    for &(a, b) in &BONES[2..4] {
        out.push((px(a), px(b), r(ARM_RADIUS)));
    }
    for &(a, b) in &BONES[5..7] {
        out.push((px(a), px(b), r(ARM_RADIUS)));
    }
    for &(a, b) in BONES[8..10].iter().chain(&BONES[11..13]) {
        out.push((px(a), px(b), r(LEG_RADIUS)));
    }
    out
}

/// Filled capsule-union body mask, `1 × H × W`, foreground `+1`.
pub fn render_silhouette(pose: &Pose, h: usize, w: usize) -> Vec<f64> {
    let caps = capsules(pose, h, w);
    let mut frame = vec![-1.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let q = [x as f64 + 0.5, y as f64 + 0.5];
            if caps.iter().any(|&(a, b, r)| segment_distance(q, a, b) <= r) {
                frame[y * w + x] = 1.0;
            }
        }
    }
    frame
}

/// Anti-aliased colored bones over a `−1` background, planar `3 × H × W`.
/// Bones are painted in table order, later ones on top.
pub fn render_skeleton(pose: &Pose, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut frame = vec![-1.0; 3 * plane];
    for (bone, &(a, b)) in BONES.iter().enumerate() {
        let a = to_pixels(pose.joints[a], h, w);
        let b = to_pixels(pose.joints[b], h, w);
        let color = BONE_COLORS[bone].map(|c| c as f64 / 255.0 * 2.0 - 1.0);
        let reach = LINE_HALF_WIDTH + 1.0;
        let x0 = (a[0].min(b[0]) - reach).floor().max(0.0) as usize;
        let x1 = ((a[0].max(b[0]) + reach).ceil().max(0.0) as usize).min(w);
        let y0 = (a[1].min(b[1]) - reach).floor().max(0.0) as usize;
        let y1 = ((a[1].max(b[1]) + reach).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = segment_distance([x as f64 + 0.5, y as f64 + 0.5], a, b);
                let alpha = (LINE_HALF_WIDTH + 0.5 - d).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    let i = y * w + x;
                    for c in 0..3 {
                        let v = &mut frame[c * plane + i];
                        *v += alpha * (color[c] - *v);
                    }
                }
            }
        }
    }
    frame
}
