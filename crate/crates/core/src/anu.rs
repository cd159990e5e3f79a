//! Adaptive teacher updating.
//!
//! Each epoch the teacher is moved toward the student by EMA, both are
//! evaluated, and whichever beats the best score so far becomes the best
//! model. A winning student also replaces the teacher outright.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("parameter vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaConfig {
    /// Per-step keep rate `m` in `teacher <- m * teacher + (1 - m) * student`.
    pub keep_rate: f64,
    /// Optimizer steps folded into one epoch-level EMA application.
    pub steps_per_epoch: u32,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { keep_rate: 0.999, steps_per_epoch: 1 }
    }
}

impl EmaConfig {
    /// Keep rate of `steps_per_epoch` EMA steps against a fixed student,
    /// i.e. `m^steps`.
    pub fn epoch_keep_rate(&self) -> f64 {
        libm::pow(self.keep_rate, f64::from(self.steps_per_epoch.max(1)))
    }
}

fn check_rate(m: f64) -> Result<()> {
    if m > 0.0 && m < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(alloc::format!("EMA keep rate {m} outside (0, 1)")))
    }
}

pub fn ema_update(teacher: &ParamVector, student: &ParamVector, m: f64) -> Result<ParamVector> {
    check_rate(m)?;
    if teacher.dim() != student.dim() {
        return Err(Error::DimensionMismatch { expected: teacher.dim(), found: student.dim() });
    }
    Ok(ParamVector(teacher.0.iter().zip(&student.0).map(|(t, s)| m * t + (1.0 - m) * s).collect()))
}

/// Which branches fired in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpochAction {
    pub teacher_improved: bool,
    pub student_improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub teacher_eval: f64,
    pub student_eval: f64,
    pub best_eval: f64,
    pub action: EpochAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnuState {
    pub teacher: ParamVector,
    pub best_params: ParamVector,
    pub best_eval: f64,
    pub history: Vec<EpochRecord>,
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEval(v))
    }
}

impl AnuState {
    /// Starts with the best model set to the initial teacher and its score.
    pub fn new(teacher: ParamVector, eval_fn: &mut impl FnMut(&ParamVector) -> f64) -> Result<Self> {
        let best_eval = finite(eval_fn(&teacher))?;
        Ok(Self::with_initial_eval(teacher, best_eval))
    }

    pub fn with_initial_eval(teacher: ParamVector, initial_eval: f64) -> Self {
        Self { best_params: teacher.clone(), teacher, best_eval: initial_eval, history: Vec::new() }
    }

    /// Applies the comparison branches to already computed evaluations.
    /// `self.teacher` must already hold the EMA result.
    pub fn apply_evals(&mut self, student: &ParamVector, teacher_eval: f64, student_eval: f64) -> Result<EpochAction> {
        let teacher_eval = finite(teacher_eval)?;
        let student_eval = finite(student_eval)?;
        let mut action = EpochAction::default();
        if teacher_eval > self.best_eval {
            self.best_params = self.teacher.clone();
            self.best_eval = teacher_eval;
            action.teacher_improved = true;
        }
        if student_eval > self.best_eval {
            self.best_params = student.clone();
            self.best_eval = student_eval;
            self.teacher = student.clone();
            action.student_improved = true;
        }
        self.history.push(EpochRecord {
            epoch: self.history.len() + 1,
            teacher_eval,
            student_eval,
            best_eval: self.best_eval,
            action,
        });
        Ok(action)
    }
}

/// One epoch: EMA, evaluate teacher then student, then the two strict
/// comparisons in order.
pub fn anu_epoch(
    state: &mut AnuState,
    student: &ParamVector,
    eval_fn: &mut impl FnMut(&ParamVector) -> f64,
    m: f64,
) -> Result<EpochAction> {
    state.teacher = ema_update(&state.teacher, student, m)?;
    let teacher_eval = eval_fn(&state.teacher);
    let student_eval = eval_fn(student);
    state.apply_evals(student, teacher_eval, student_eval)
}

pub fn anu_run(
    initial_teacher: ParamVector,
    students: &[ParamVector],
    eval_fn: &mut impl FnMut(&ParamVector) -> f64,
    m: f64,
) -> Result<AnuState> {
    if students.is_empty() {
        return Err(Error::EmptyBatch("student trajectory is empty"));
    }
    check_rate(m)?;
    let mut state = AnuState::new(initial_teacher, eval_fn)?;
    for s in students {
        anu_epoch(&mut state, s, eval_fn, m)?;
    }
    Ok(state)
}

/// `-||p - target||^2`, the synthetic quadratic benchmark evaluator.
pub fn quadratic_eval(target: &[f64]) -> impl FnMut(&ParamVector) -> f64 + '_ {
    move |p: &ParamVector| -p.0.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Seeded student trajectory that drifts linearly from `start` to `target`
/// over `epochs` epochs with Gaussian noise shrinking toward the end.
pub fn synthetic_students(
    start: &ParamVector,
    target: &[f64],
    epochs: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ParamVector>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    if start.dim() != target.len() {
        return Err(Error::DimensionMismatch { expected: start.dim(), found: target.len() });
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig("noise sigma must be finite and non-negative".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(epochs);
    for e in 1..=epochs {
        let t = e as f64 / epochs as f64;
        let sigma = noise_sigma * (1.0 - t) + 1e-3 * noise_sigma;
        let n = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
        let p = start.0.iter().zip(target).map(|(a, b)| a + t * (b - a) + n.sample(&mut rng)).collect();
        out.push(ParamVector(p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ema_examples() {
        let t = ema_update(&pv(&[0.0]), &pv(&[1.0]), 0.9).unwrap();
        assert!((t.0[0] - 0.1).abs() < 1e-15);
        let same = pv(&[0.3, -2.0]);
        assert_eq!(ema_update(&same, &same, 0.7).unwrap(), same);
        assert!(ema_update(&pv(&[0.0]), &pv(&[0.0, 1.0]), 0.9).is_err());
        assert!(ema_update(&pv(&[0.0]), &pv(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn ema_converges_in_predicted_steps() {
        let m = 0.9;
        let student = pv(&[1.0, -3.0]);
        let mut teacher = pv(&[0.0, 0.0]);
        let gap0: f64 = libm::sqrt(10.0);
        let steps = libm::ceil(libm::log(1e-6) / libm::log(m)) as usize;
        for _ in 0..steps {
            teacher = ema_update(&teacher, &student, m).unwrap();
        }
        let gap = libm::hypot(teacher.0[0] - student.0[0], teacher.0[1] - student.0[1]);
        assert!(gap <= 1e-6 * gap0 * (1.0 + 1e-9));
    }

    /// Evaluator that replays fixed scores in call order.
    fn scripted(scores: &[f64]) -> impl FnMut(&ParamVector) -> f64 + '_ {
        let mut i = 0;
        move |_| {
            i += 1;
            scores[i - 1]
        }
    }

    #[test]
    fn student_branch_replaces_teacher() {
        let mut eval = scripted(&[0.5, 0.52, 0.55]);
        let mut s = AnuState::new(pv(&[0.0]), &mut eval).unwrap();
        let student = pv(&[1.0]);
        let a = anu_epoch(&mut s, &student, &mut eval, 0.9).unwrap();
        assert!(a.teacher_improved && a.student_improved);
        assert_eq!(s.best_eval, 0.55);
        assert_eq!(s.best_params, student);
        assert_eq!(s.teacher, student);
    }

    #[test]
    fn no_branch_keeps_ema_teacher() {
        let mut eval = scripted(&[0.5, 0.49, 0.48]);
        let mut s = AnuState::new(pv(&[0.0]), &mut eval).unwrap();
        let a = anu_epoch(&mut s, &pv(&[1.0]), &mut eval, 0.9).unwrap();
        assert_eq!(a, EpochAction::default());
        assert!((s.teacher.0[0] - 0.1).abs() < 1e-15);
        assert_eq!(s.best_params, pv(&[0.0]));
        assert_eq!(s.best_eval, 0.5);
    }

    #[test]
    fn ties_keep_incumbent() {
        let mut eval = scripted(&[0.5, 0.4, 0.5]);
        let mut s = AnuState::new(pv(&[0.0]), &mut eval).unwrap();
        let a = anu_epoch(&mut s, &pv(&[1.0]), &mut eval, 0.9).unwrap();
        assert!(!a.student_improved);
        assert_eq!(s.best_params, pv(&[0.0]));
    }

    #[test]
    fn non_finite_eval_is_an_error() {
        let mut eval = scripted(&[0.5, f64::NAN, 0.1]);
        let mut s = AnuState::new(pv(&[0.0]), &mut eval).unwrap();
        assert!(matches!(anu_epoch(&mut s, &pv(&[1.0]), &mut eval, 0.9), Err(Error::NonFiniteEval(_))));
    }

    #[test]
    fn identical_students_never_change_best() {
        let target = [2.0, 2.0];
        let t0 = pv(&[1.0, 1.0]);
        let students = vec![t0.clone(); 5];
        let s = anu_run(t0.clone(), &students, &mut quadratic_eval(&target), 0.99).unwrap();
        assert_eq!(s.best_params, t0);
        assert!(s.history.iter().all(|r| r.action == EpochAction::default()));
    }

    #[test]
    fn improving_students_end_as_teacher() {
        let target = [3.0, -1.0];
        let students: Vec<ParamVector> =
            (1..=8).map(|i| pv(&[3.0 * f64::from(i) / 8.0, -f64::from(i) / 8.0])).collect();
        let s = anu_run(pv(&[0.0, 0.0]), &students, &mut quadratic_eval(&target), 0.999).unwrap();
        assert!(s.history.iter().all(|r| r.action.student_improved));
        assert_eq!(s.teacher, *students.last().unwrap());
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        assert!(anu_run(pv(&[0.0]), &[], &mut quadratic_eval(&[0.0]), 0.9).is_err());
    }

    #[test]
    fn synthetic_students_are_seeded() {
        let a = synthetic_students(&pv(&[0.0, 0.0]), &[1.0, 2.0], 20, 0.3, 5).unwrap();
        assert_eq!(a, synthetic_students(&pv(&[0.0, 0.0]), &[1.0, 2.0], 20, 0.3, 5).unwrap());
        assert_eq!(a.len(), 20);
        let last = &a[19];
        assert!((last.0[0] - 1.0).abs() < 0.01 && (last.0[1] - 2.0).abs() < 0.01);
    }

    #[test]
    fn epoch_rate_composes_steps() {
        let c = EmaConfig { keep_rate: 0.999, steps_per_epoch: 100 };
        assert!((c.epoch_keep_rate() - libm::pow(0.999, 100.0)).abs() < 1e-15);
    }
}
