//! A 14-joint stick figure and smooth pose trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N_JOINTS: usize = 14;

/// Joint indices into [`Pose::joints`]. "Right" is the figure's right,
/// which appears on the image's left.
pub mod joint {
    pub const HEAD: usize = 0;
    pub const NECK: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const R_ELBOW: usize = 3;
    pub const R_WRIST: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const L_ELBOW: usize = 6;
    pub const L_WRIST: usize = 7;
    pub const R_HIP: usize = 8;
    pub const R_KNEE: usize = 9;
    pub const R_ANKLE: usize = 10;
    pub const L_HIP: usize = 11;
    pub const L_KNEE: usize = 12;
    pub const L_ANKLE: usize = 13;
}

/// Bones as joint index pairs.
pub const BONES: [(usize, usize); 13] = {
    use joint::*;
    [
        (NECK, HEAD),
        (NECK, R_SHOULDER),
        (R_SHOULDER, R_ELBOW),
        (R_ELBOW, R_WRIST),
        (NECK, L_SHOULDER),
        (L_SHOULDER, L_ELBOW),
        (L_ELBOW, L_WRIST),
        (NECK, R_HIP),
        (R_HIP, R_KNEE),
        (R_KNEE, R_ANKLE),
        (NECK, L_HIP),
        (L_HIP, L_KNEE),
        (L_KNEE, L_ANKLE),
    ]
};

/// Joint positions `(x, y)` in normalized scene coordinates; `x` grows to
/// the right, `y` grows downwards, both within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub joints: [[f64; 2]; N_JOINTS],
}

impl Pose {
    pub fn centroid(&self) -> [f64; 2] {
        let mut c = [0.0; 2];
        for j in &self.joints {
            c[0] += j[0];
            c[1] += j[1];
        }
        [c[0] / N_JOINTS as f64, c[1] / N_JOINTS as f64]
    }

    /// Mean distance of wrists and ankles from the centroid.
    pub fn limb_spread(&self) -> f64 {
        use joint::*;
        let c = self.centroid();
        [R_WRIST, L_WRIST, R_ANKLE, L_ANKLE]
            .iter()
            .map(|&i| {
                let [x, y] = self.joints[i];
                (x - c[0]).hypot(y - c[1])
            })
            .sum::<f64>()
            / 4.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        let mut p = *self;
        for j in p.joints.iter_mut() {
            j[0] += dx;
            j[1] += dy;
        }
        p
    }

    pub fn lerp(&self, other: &Pose, u: f64) -> Pose {
        let mut p = *self;
        for (a, b) in p.joints.iter_mut().zip(&other.joints) {
            a[0] += u * (b[0] - a[0]);
            a[1] += u * (b[1] - a[1]);
        }
        p
    }

    pub fn in_unit_square(&self) -> bool {
        self.joints
            .iter()
            .all(|j| (0.0..=1.0).contains(&j[0]) && (0.0..=1.0).contains(&j[1]))
    }
}

/// Per-step motion limit for every joint along each axis.
pub const MAX_STEP: f64 = 0.05;

/// Fixed skeleton proportions of one figure.
#[derive(Debug, Clone, Copy)]
struct Figure {
    head: f64,
    shoulder: f64,
    upper_arm: f64,
    forearm: f64,
    torso: f64,
    hip: f64,
    thigh: f64,
    shin: f64,
}

/// `base + amp · sin(rate · t + phase)` with `amp · rate` bounded so the
/// per-step change stays small.
#[derive(Debug, Clone, Copy)]
struct Oscillator {
    base: f64,
    amp: f64,
    rate: f64,
    phase: f64,
}

impl Oscillator {
    fn random(rng: &mut ChaCha8Rng, base: f64, max_amp: f64, max_speed: f64) -> Self {
        let amp = rng.random_range(0.3..=1.0) * max_amp;
        let rate = rng.random_range(0.3..=1.0) * (max_speed / amp.max(1e-9)).min(0.6);
        Self {
            base,
            amp,
            rate,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.base + self.amp * (self.rate * t + self.phase).sin()
    }
}

/// Limits on angular speed (radians per step) and root speed keep every
/// joint's per-step displacement under [`MAX_STEP`]: the longest chain is
/// root → torso → thigh → shin, moving at most
/// `0.008 + (0.25 + 0.17 + 2 · 0.16) · 0.03 ≈ 0.03` per step.
const ANGLE_SPEED: f64 = 0.03;
const ROOT_SPEED: f64 = 0.008;

/// A deterministic trajectory of `frames` poses.
pub fn pose_trajectory(seed: u64, frames: usize) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = rng.random_range(0.92..=1.0);
    let fig = Figure {
        head: 0.09 * s,
        shoulder: 0.07 * s,
        upper_arm: 0.13 * s,
        forearm: 0.12 * s,
        torso: 0.25 * s,
        hip: 0.05 * s,
        thigh: 0.17 * s,
        shin: 0.16 * s,
    };
    let root_x = Oscillator::random(&mut rng, 0.5, 0.12, ROOT_SPEED);
    let root_y = Oscillator::random(&mut rng, 0.25, 0.02, ROOT_SPEED / 4.0);
    let head = Oscillator::random(&mut rng, 0.0, 0.25, ANGLE_SPEED);
    let lean = Oscillator::random(&mut rng, 0.0, 0.12, ANGLE_SPEED);
    // Arm angles are measured from straight down, positive towards +x.
    let r_arm = Oscillator::random(&mut rng, -0.7, 0.9, ANGLE_SPEED);
    let r_elbow = Oscillator::random(&mut rng, -0.4, 0.4, ANGLE_SPEED);
    let l_arm = Oscillator::random(&mut rng, 0.7, 0.9, ANGLE_SPEED);
    let l_elbow = Oscillator::random(&mut rng, 0.4, 0.4, ANGLE_SPEED);
    let r_leg = Oscillator::random(&mut rng, -0.1, 0.35, ANGLE_SPEED);
    let r_knee = Oscillator::random(&mut rng, 0.15, 0.15, ANGLE_SPEED);
    let l_leg = Oscillator::random(&mut rng, 0.1, 0.35, ANGLE_SPEED);
    let l_knee = Oscillator::random(&mut rng, 0.15, 0.15, ANGLE_SPEED);

    let dir = |angle: f64| [angle.sin(), angle.cos()];
    let step = |from: [f64; 2], len: f64, angle: f64| {
        let d = dir(angle);
        [from[0] + len * d[0], from[1] + len * d[1]]
    };

    (0..frames)
        .map(|t| {
            let t = t as f64;
            use joint::*;
            let mut j = [[0.0; 2]; N_JOINTS];
            let neck = [root_x.at(t), root_y.at(t)];
            j[NECK] = neck;
            let h = head.at(t);
            j[HEAD] = [neck[0] + fig.head * h.sin(), neck[1] - fig.head * h.cos()];
            j[R_SHOULDER] = [neck[0] - fig.shoulder, neck[1] + 0.02];
            j[L_SHOULDER] = [neck[0] + fig.shoulder, neck[1] + 0.02];
            let (ra, la) = (r_arm.at(t), l_arm.at(t));
            j[R_ELBOW] = step(j[R_SHOULDER], fig.upper_arm, ra);
            j[R_WRIST] = step(j[R_ELBOW], fig.forearm, ra + r_elbow.at(t));
            j[L_ELBOW] = step(j[L_SHOULDER], fig.upper_arm, la);
            j[L_WRIST] = step(j[L_ELBOW], fig.forearm, la + l_elbow.at(t));
            let pelvis = step(neck, fig.torso, lean.at(t));
            j[R_HIP] = [pelvis[0] - fig.hip, pelvis[1]];
            j[L_HIP] = [pelvis[0] + fig.hip, pelvis[1]];
            let (rl, ll) = (r_leg.at(t), l_leg.at(t));
            j[R_KNEE] = step(j[R_HIP], fig.thigh, rl);
            j[R_ANKLE] = step(j[R_KNEE], fig.shin, rl - r_knee.at(t));
            j[L_KNEE] = step(j[L_HIP], fig.thigh, ll);
            j[L_ANKLE] = step(j[L_KNEE], fig.shin, ll - l_knee.at(t));
            Pose { joints: j }
        })
        .collect()
}
