//! Adversarial and reconstruction objectives of both branches.

use super::LossWeights;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Handles of the teacher objective terms inside a graph.
#[derive(Debug, Clone, Copy)]
pub struct TeacherTerms {
    pub l_adv_c: Var,
    pub l_adv_g: Var,
    pub mse_y: Var,
    pub l_teacher: Var,
}

/// Handles of the student objective terms inside a graph.
#[derive(Debug, Clone, Copy)]
pub struct StudentTerms {
    pub mse_v: Var,
    pub mse_s: Var,
    pub l_student: Var,
}

fn check_probabilities(g: &Graph, c: Var) -> Result<()> {
    match g.value(c).data().iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        Some(&p) => Err(Error::DomainError(p)),
        None => Ok(()),
    }
}

/// `−mean(ln c_real + ln(1 − c_fake))` over the batch.
pub fn discriminator_loss(g: &mut Graph, c_real: Var, c_fake: Var) -> Result<Var> {
    check_probabilities(g, c_real)?;
    check_probabilities(g, c_fake)?;
    let lr = g.ln(c_real)?;
    let one_minus = g.affine(c_fake, -1.0, 1.0);
    let lf = g.ln(one_minus)?;
    let s = g.add(lr, lf)?;
    let m = g.mean(s);
    Ok(g.scale(m, -1.0))
}

/// Non-saturating generator loss `−mean(ln c_fake)`.
pub fn generator_loss(g: &mut Graph, c_fake: Var) -> Result<Var> {
    check_probabilities(g, c_fake)?;
    let l = g.ln(c_fake)?;
    let m = g.mean(l);
    Ok(g.scale(m, -1.0))
}

/// All teacher terms; `L_teacher = w_adv·L_adv_G + w_Y·MSE_Y`.
pub fn teacher_terms(g: &mut Graph, f: Var, y: Var, c_real: Var, c_fake: Var, w: &LossWeights) -> Result<TeacherTerms> {
    let l_adv_c = discriminator_loss(g, c_real, c_fake)?;
    let l_adv_g = generator_loss(g, c_fake)?;
    let mse_y = g.mse(f, y)?;
    let a = g.scale(l_adv_g, w.w_adv);
    let b = g.scale(mse_y, w.w_y);
    let l_teacher = g.add(a, b)?;
    Ok(TeacherTerms {
        l_adv_c,
        l_adv_g,
        mse_y,
        l_teacher,
    })
}

/// `MSE_V` against the teacher latent, `MSE_S` against the teacher frames,
/// and `L_student = w_V·MSE_V + w_S·MSE_S`. The caller passes `z` and `y`
/// as constants.
pub fn student_terms(g: &mut Graph, z: Var, v: Var, y: Var, s: Var, w: &LossWeights) -> Result<StudentTerms> {
    let mse_v = g.mse(z, v)?;
    let mse_s = g.mse(y, s)?;
    let a = g.scale(mse_v, w.w_v);
    let b = g.scale(mse_s, w.w_s);
    let l_student = g.add(a, b)?;
    Ok(StudentTerms { mse_v, mse_s, l_student })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherLosses {
    pub l_adv_c: f64,
    pub l_adv_g: f64,
    pub mse_y: f64,
    pub l_teacher: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentLosses {
    pub mse_v: f64,
    pub mse_s: f64,
    pub l_student: f64,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Teacher losses for frames `f`, reconstruction `y` and per-clip
/// discriminator outputs.
pub fn teacher_losses(f: &Tensor, y: &Tensor, c_real: &[f64], c_fake: &[f64], w: &LossWeights) -> Result<TeacherLosses> {
    same_shape(f, y, "teacher_losses")?;
    if c_real.len() != c_fake.len() || c_real.is_empty() {
        return Err(Error::ShapeMismatch("teacher_losses: probability batches differ".into()));
    }
    let mut g = Graph::new();
    let fv = g.constant(f.clone());
    let yv = g.constant(y.clone());
    let cr = g.constant(Tensor::new([c_real.len()], c_real.to_vec())?);
    let cf = g.constant(Tensor::new([c_fake.len()], c_fake.to_vec())?);
    let t = teacher_terms(&mut g, fv, yv, cr, cf, w)?;
    Ok(TeacherLosses {
        l_adv_c: g.value(t.l_adv_c).item(),
        l_adv_g: g.value(t.l_adv_g).item(),
        mse_y: g.value(t.mse_y).item(),
        l_teacher: g.value(t.l_teacher).item(),
    })
}

pub fn student_losses(z: &Tensor, v: &Tensor, y: &Tensor, s: &Tensor, w: &LossWeights) -> Result<StudentLosses> {
    same_shape(z, v, "student_losses latent")?;
    same_shape(y, s, "student_losses frames")?;
    let mut g = Graph::new();
    let [zv, vv, yv, sv] = [z, v, y, s].map(|t| g.constant(t.clone()));
    let t = student_terms(&mut g, zv, vv, yv, sv, w)?;
    Ok(StudentLosses {
        mse_v: g.value(t.mse_v).item(),
        mse_s: g.value(t.mse_s).item(),
        l_student: g.value(t.l_student).item(),
    })
}

/// `L = L_teacher + L_student`.
pub fn total_loss(l_teacher: f64, l_student: f64) -> f64 {
    l_teacher + l_student
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let f = Tensor::new([2], vec![0.5, -0.5]).unwrap();
        let t = teacher_losses(&f, &f, &[0.5], &[0.5], &LossWeights::default()).unwrap();
        assert_eq!(t.mse_y, 0.0);
        assert!((t.l_adv_c - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            teacher_losses(&f, &f, &[1.0], &[0.5], &LossWeights::default()),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn student_offset() {
        let z = Tensor::full([3, 2], 1.0);
        let v = Tensor::zeros([3, 2]);
        let y = Tensor::zeros([4]);
        let s = student_losses(&z, &v, &y, &y, &LossWeights::default()).unwrap();
        assert_eq!(s.mse_v, 1.0);
        assert_eq!(s.mse_s, 0.0);
        assert_eq!(total_loss(1.5, 0.5), 2.0);
    }
}
