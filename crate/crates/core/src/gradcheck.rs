//! Finite-difference checks of tape gradients with respect to network
//! parameters.
//!
//! Full coverage of a 512-wide bundle would cost two forward passes per
//! parameter, so each weight and bias tensor is probed at its largest
//! analytic entries plus a seeded random sample. A probe whose `±step`
//! passes land on different sides of a ReLU or L1 kink than the base pass
//! is skipped and counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Value};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::networks::{BoundBundle, ModelBundle, Role};

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Central-difference step.
    pub step: f64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
    /// Entries with the largest analytic magnitude probed per tensor.
    pub top: usize,
    /// Additional uniformly drawn entries probed per tensor.
    pub sampled: usize,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-6,
            tolerance: 1e-5,
            top: 3,
            sampled: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Smallest derivative magnitude the differences resolve to the
    /// tolerance; used as the relative-error denominator below it.
    pub floor: f64,
    /// `role layer tensor[index]` of the worst probe.
    pub worst: String,
    /// Analytic and numeric derivative at the worst probe.
    pub worst_values: (f64, f64),
    pub checked: usize,
    /// Probes dropped because a perturbation crossed a kink.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passes(&self) -> bool {
        self.checked > 0 && self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy)]
struct Probe {
    role: Role,
    layer: usize,
    bias: bool,
    /// The tensor's record on the evaluation tape.
    tensor: Value,
    index: usize,
}

impl Probe {
    fn slot<'a>(&self, tape: &'a mut Tape) -> Result<&'a mut f64> {
        Ok(&mut tape.leaf_mut(self.tensor)?.as_mut_slice()[self.index])
    }

    fn label(&self) -> String {
        let t = if self.bias { "bias" } else { "weight" };
        format!("{} layer {} {t}[{}]", self.role, self.layer, self.index)
    }
}

impl GradCheck {
    /// Compares the gradient of `loss` with respect to every network in
    /// `roles` against central differences. Only those networks are bound.
    pub fn check<F>(&self, bundle: &ModelBundle, roles: &[Role], loss: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &BoundBundle) -> Result<Value>,
    {
        let mut tape = Tape::new();
        let bound = bundle.bind_roles(&mut tape, roles);
        let v = loss(&mut tape, &bound)?;
        let base_pattern = tape.kink_pattern();
        // Each evaluation of the loss is rounded to a few ulps of its value,
        // so the difference quotient carries an absolute error of about
        // `4 eps |L| / step`. Derivatives smaller than that error over the
        // tolerance cannot be resolved; their error is measured against it.
        let floor = 4.0 * f64::EPSILON * tape.scalar(v).abs().max(1.0) / (self.step * self.tolerance);
        tape.backward(v)?;

        // Perturbed passes reuse one tape: the parameters are bound once,
        // edited in place, and everything recorded after them is dropped
        // before each pass.
        let mut work = Tape::new();
        let work_nets = bundle.bind_roles(&mut work, roles);
        let bound_len = work.len();
        let eval = |work: &mut Tape| -> Result<(f64, Vec<i8>)> {
            work.truncate(bound_len);
            let v = loss(work, &work_nets)?;
            Ok((work.scalar(v), work.kink_pattern()))
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut probes = Vec::new();
        for &role in roles {
            let on_work = work_nets.get(role)?.layers().to_vec();
            for (layer, bl) in bound.get(role)?.layers().iter().enumerate() {
                let wl = on_work[layer];
                for (bias, value, tensor) in [(false, bl.weight, wl.weight), (true, bl.bias, wl.bias)] {
                    let g = tape.grad(value);
                    for index in self.pick(&g, &mut rng) {
                        probes.push((
                            Probe {
                                role,
                                layer,
                                bias,
                                tensor,
                                index,
                            },
                            g.as_slice()[index],
                        ));
                    }
                }
            }
        }

        let mut report = GradCheckReport {
            max_rel_err: 0.0,
            tolerance: self.tolerance,
            floor,
            worst: String::new(),
            worst_values: (0.0, 0.0),
            checked: 0,
            skipped: 0,
        };
        for (probe, analytic) in probes {
            let orig = *probe.slot(&mut work)?;
            *probe.slot(&mut work)? = orig + self.step;
            let (plus, p_plus) = eval(&mut work)?;
            *probe.slot(&mut work)? = orig - self.step;
            let (minus, p_minus) = eval(&mut work)?;
            *probe.slot(&mut work)? = orig;
            if p_plus != base_pattern || p_minus != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * self.step);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = err.max(report.max_rel_err);
                report.worst = probe.label();
                report.worst_values = (analytic, numeric);
            }
        }
        Ok(report)
    }

    fn pick(&self, g: &Matrix, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = g.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| g.as_slice()[b].abs().total_cmp(&g.as_slice()[a].abs()));
        let mut out: Vec<usize> = order.into_iter().take(self.top).collect();
        for _ in 0..self.sampled.min(n) {
            out.push(rng.random_range(0..n));
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
