use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{forward_eval, Tape, Var};
use super::{Float, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference half step `h`.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Parameter sets larger than this are checked on a random subsample.
    pub exhaustive_limit: usize,
    pub subsample: usize,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so elements whose true
    /// gradient is (numerically) zero are compared absolutely.
    pub denominator_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-3,
            exhaustive_limit: 10_000,
            subsample: 1_000,
            seed: 0,
            denominator_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter index, element index)` of the worst element.
    pub worst: Option<(usize, usize)>,
    /// Elements where a perturbed loss was non-finite.
    pub non_finite: usize,
    pub passed: bool,
}

fn eval<T, F>(program: &F, params: &[Tensor<T>]) -> Result<f64>
where
    T: Float,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let (tape, _, out) = forward_eval(params, program)?;
    Ok(tape.value(out)[0].as_f64())
}

/// Compares backpropagated gradients against central finite differences
/// `(f(w+h) - f(w-h)) / 2h`, element by element.
pub fn check_gradients<T, F>(program: F, params: &mut [Tensor<T>], config: &GradCheckConfig) -> Result<GradCheckReport>
where
    T: Float,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = forward_eval(params, &program)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params.iter())
        .map(|(v, p)| match grads.get(*v) {
            Some(g) => g.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; p.len()],
        })
        .collect();
    drop(tape);

    let total: usize = params.iter().map(|p| p.len()).sum();
    let picks: Vec<usize> = if total <= config.exhaustive_limit {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut v = index::sample(&mut rng, total, config.subsample.min(total)).into_vec();
        v.sort_unstable();
        v
    };

    let sizes: Vec<usize> = params.iter().map(|p| p.len()).collect();
    let locate = |mut flat: usize| {
        for (i, &n) in sizes.iter().enumerate() {
            if flat < n {
                return (i, flat);
            }
            flat -= n;
        }
        unreachable!("flat index within total")
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        non_finite: 0,
        passed: true,
    };
    let h = config.step;
    for flat in picks {
        let (pi, ei) = locate(flat);
        let original = params[pi].data()[ei];
        params[pi].data_mut()[ei] = T::from_f64(original.as_f64() + h);
        let plus = eval(&program, params);
        params[pi].data_mut()[ei] = T::from_f64(original.as_f64() - h);
        let minus = eval(&program, params);
        params[pi].data_mut()[ei] = original;
        let (plus, minus) = (plus?, minus?);

        report.checked += 1;
        if !plus.is_finite() || !minus.is_finite() {
            report.non_finite += 1;
            report.passed = false;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let exact = analytic[pi][ei];
        let denom = numeric.abs().max(exact.abs()).max(config.denominator_floor);
        let rel = (numeric - exact).abs() / denom;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((pi, ei));
        }
    }
    report.passed &= report.max_rel_error < config.tolerance;
    Ok(report)
}
