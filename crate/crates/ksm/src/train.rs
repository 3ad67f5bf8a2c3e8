//! Two-timescale stochastic gradient descent-ascent training loop.
//!
//! Each iteration samples a minibatch, computes the optimal responses in
//! closed form, takes the exact parameter gradients of the minibatch-mean
//! energy, and applies
//!
//! ```text
//! w_i ← w_i − (η_w / max(q_i², q_floor)) ∂ē/∂w_i      (rescaled descent)
//! q_i ← q_i − η_q ∂ē/∂q_i                             (descent)
//! L  ← L  + η_l ∂ē/∂L                                 (ascent)
//! ```
//!
//! The lateral learning rate must dominate (η_w ≤ η_l and η_q ≤ η_l in every
//! phase) so L tracks its inner maximum; config validation enforces this.
//! The 1/q² rescale compensates for gains shrinking early in training; the
//! q_floor clamp keeps that step bounded without moving any fixed point.
//!
//! For homogeneous kernels (f(au, bv) = (ab)^α f(u,v)) the gain can be folded
//! into the feature as w′ = q^{1/α} w, so [`train_homogeneous`] pins q at 1
//! and never updates it.

use std::io::{self, Write};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_minibatch, Dataset};
use crate::error::{KsmError, Result};
use crate::kernel::Kernel;
use crate::model::ModelState;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One stretch of training at fixed learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub iterations: usize,
    pub eta_w: f64,
    pub eta_q: f64,
    pub eta_l: f64,
}

/// Everything that determines a training run besides the data and kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Learning-rate schedule, run in order.
    pub phases: Vec<Phase>,
    /// Ridge λ on the response norm (becomes part of the model state).
    pub lambda: f64,
    pub seed: u64,
    /// Clamp for the 1/q² step rescale denominator.
    pub q_floor: f64,
    /// Record a `TrainLog` row every this many iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            phases: Vec::new(),
            lambda: 0.001,
            seed: 0,
            q_floor: 1e-4,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    /// Reference schedule for the two-moons experiment: 10k iterations at
    /// (η_w, η_q, η_l) = (0.01, 0.01, 0.1), then 10k more with every rate
    /// annealed 10x.
    pub fn half_moons_schedule(seed: u64) -> TrainConfig {
        TrainConfig {
            phases: vec![
                Phase {
                    iterations: 10_000,
                    eta_w: 0.01,
                    eta_q: 0.01,
                    eta_l: 0.1,
                },
                Phase {
                    iterations: 10_000,
                    eta_w: 0.001,
                    eta_q: 0.001,
                    eta_l: 0.01,
                },
            ],
            seed,
            ..TrainConfig::default()
        }
    }

    /// Reference schedule for the image experiments (homogeneous mode, so
    /// η_q = 0): 10k iterations at (η_w, η_l) = (0.001, 0.01), then 5k at
    /// (0.0001, 0.001).
    pub fn image_schedule(seed: u64) -> TrainConfig {
        TrainConfig {
            phases: vec![
                Phase {
                    iterations: 10_000,
                    eta_w: 0.001,
                    eta_q: 0.0,
                    eta_l: 0.01,
                },
                Phase {
                    iterations: 5_000,
                    eta_w: 0.0001,
                    eta_q: 0.0,
                    eta_l: 0.001,
                },
            ],
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(KsmError::InvalidArgument(
                "training batch_size must be >= 1".to_string(),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(KsmError::InvalidArgument(format!(
                "training lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.q_floor.is_finite() && self.q_floor > 0.0) {
            return Err(KsmError::InvalidArgument(format!(
                "training q_floor must be finite and > 0, got {}",
                self.q_floor
            )));
        }
        if self.log_every == 0 {
            return Err(KsmError::InvalidArgument(
                "training log_every must be >= 1".to_string(),
            ));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.iterations == 0 {
                return Err(KsmError::InvalidArgument(format!(
                    "phase {i}: iterations must be >= 1"
                )));
            }
            for (name, v) in [("eta_w", p.eta_w), ("eta_q", p.eta_q), ("eta_l", p.eta_l)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(KsmError::InvalidArgument(format!(
                        "phase {i}: {name} must be finite and >= 0, got {v}"
                    )));
                }
            }
            if p.eta_w > p.eta_l || p.eta_q > p.eta_l {
                return Err(KsmError::InvalidArgument(format!(
                    "phase {i} violates the two-timescale rule (requires eta_w <= eta_l and \
                     eta_q <= eta_l, got eta_w={}, eta_q={}, eta_l={})",
                    p.eta_w, p.eta_q, p.eta_l
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Log
// ---------------------------------------------------------------------------

/// One logged iteration: the minibatch mean energy and gradient norms are
/// taken before the update is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iter: usize,
    pub mean_energy: f64,
    pub grad_w_norm: f64,
    pub grad_q_norm: f64,
    pub grad_l_norm: f64,
    /// Milliseconds since the start of the run. The one nondeterministic
    /// column; everything else replays bit-identically for a fixed seed.
    pub wall_ms: f64,
}

/// Rows recorded at the first iteration, every `log_every`-th iteration, and
/// the final iteration.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,mean_energy,grad_w_norm,grad_q_norm,grad_l_norm,wall_ms")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.iter, r.mean_energy, r.grad_w_norm, r.grad_q_norm, r.grad_l_norm, r.wall_ms
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Trains a fresh model on `dataset` with `n` output units.
pub fn train(
    dataset: &Dataset,
    kernel: Kernel,
    n: usize,
    config: &TrainConfig,
) -> Result<(ModelState, TrainLog)> {
    run(dataset, kernel, n, config, false, |_, _| {})
}

/// Like [`train`] but also calls `observer(phase_index, &state)` after each
/// phase completes, e.g. to checkpoint at phase boundaries.
pub fn train_observed(
    dataset: &Dataset,
    kernel: Kernel,
    n: usize,
    config: &TrainConfig,
    observer: impl FnMut(usize, &ModelState),
) -> Result<(ModelState, TrainLog)> {
    run(dataset, kernel, n, config, false, observer)
}

/// Training with the gain eliminated: q is pinned at 1 and never updated.
/// Only valid for kernels with a declared homogeneity degree.
pub fn train_homogeneous(
    dataset: &Dataset,
    kernel: Kernel,
    n: usize,
    config: &TrainConfig,
) -> Result<(ModelState, TrainLog)> {
    train_homogeneous_observed(dataset, kernel, n, config, |_, _| {})
}

/// [`train_homogeneous`] with a phase-boundary observer.
pub fn train_homogeneous_observed(
    dataset: &Dataset,
    kernel: Kernel,
    n: usize,
    config: &TrainConfig,
    observer: impl FnMut(usize, &ModelState),
) -> Result<(ModelState, TrainLog)> {
    if kernel.homogeneity().is_none() {
        return Err(KsmError::InvalidArgument(format!(
            "train_homogeneous requires a homogeneous kernel, got {}",
            kernel.label()
        )));
    }
    run(dataset, kernel, n, config, true, observer)
}

fn run(
    dataset: &Dataset,
    kernel: Kernel,
    n: usize,
    config: &TrainConfig,
    pin_q: bool,
    mut observer: impl FnMut(usize, &ModelState),
) -> Result<(ModelState, TrainLog)> {
    config.validate()?;
    if n == 0 {
        return Err(KsmError::InvalidArgument("train: N must be >= 1".to_string()));
    }
    if config.batch_size > dataset.len() {
        return Err(KsmError::InvalidArgument(format!(
            "train: batch_size {} exceeds dataset size {}",
            config.batch_size,
            dataset.len()
        )));
    }

    let m = dataset.dim();
    let mut state = ModelState::init(n, m, kernel, config.lambda, config.seed);
    // Separate RNG stream for batches so init draws and batch draws cannot
    // interleave; both derive from the single user seed.
    let mut batch_rng = ChaCha8Rng::seed_from_u64(config.seed);
    batch_rng.set_stream(1);

    let total: usize = config.phases.iter().map(|p| p.iterations).sum();
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut global = 0usize;

    let abort = |iteration: usize, e: KsmError| KsmError::TrainingAborted {
        iteration,
        source: Box::new(e),
    };

    for (pi, phase) in config.phases.iter().enumerate() {
        for _ in 0..phase.iterations {
            global += 1;
            let x = sample_minibatch(dataset, config.batch_size, &mut batch_rng)?;
            let resp = state
                .response_closed_form(&x)
                .map_err(|e| abort(global, e))?;
            let g = state
                .param_gradients(&x, &resp.y)
                .map_err(|e| abort(global, e))?;

            let mean_energy = resp.energies.sum() / resp.energies.len() as f64;
            if !mean_energy.is_finite() {
                return Err(KsmError::NonFiniteParameter {
                    iteration: global,
                    parameter: "energy",
                });
            }
            if global == 1 || global % config.log_every == 0 || global == total {
                log.records.push(TrainRecord {
                    iter: global,
                    mean_energy,
                    grad_w_norm: g.dw.norm(),
                    grad_q_norm: g.dq.norm(),
                    grad_l_norm: g.dl.norm(),
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }

            for i in 0..n {
                let step = phase.eta_w / (state.q[i] * state.q[i]).max(config.q_floor);
                for j in 0..m {
                    state.w[(i, j)] -= step * g.dw[(i, j)];
                }
            }
            if !pin_q {
                for i in 0..n {
                    state.q[i] -= phase.eta_q * g.dq[i];
                }
            }
            for i in 0..n {
                for j in 0..n {
                    state.l[(i, j)] += phase.eta_l * g.dl[(i, j)];
                }
            }

            for (name, finite) in [
                ("W", state.w.iter().all(|v| v.is_finite())),
                ("q", state.q.iter().all(|v| v.is_finite())),
                ("L", state.l.iter().all(|v| v.is_finite())),
            ] {
                if !finite {
                    return Err(KsmError::NonFiniteParameter {
                        iteration: global,
                        parameter: name,
                    });
                }
            }
        }
        observer(pi, &state);
    }
    Ok((state, log))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::data::make_half_moons;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn short_config(seed: u64) -> TrainConfig {
        TrainConfig {
            phases: vec![Phase {
                iterations: 200,
                eta_w: 0.01,
                eta_q: 0.01,
                eta_l: 0.1,
            }],
            batch_size: 32,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation_enforces_two_timescales() {
        let mut c = short_config(0);
        c.phases[0].eta_w = 0.2; // exceeds eta_l = 0.1
        match c.validate() {
            Err(KsmError::InvalidArgument(msg)) => {
                assert!(msg.contains("two-timescale"), "message: {msg}")
            }
            other => panic!("expected InvalidArgument, got {other:?}"),
        }

        let mut c = short_config(0);
        c.phases[0].eta_q = 0.5;
        assert!(c.validate().is_err());

        let mut c = short_config(0);
        c.phases[0].iterations = 0;
        assert!(c.validate().is_err());

        assert!(short_config(0).validate().is_ok());
    }

    #[test]
    fn zero_learning_rates_leave_the_state_untouched() {
        let data = make_half_moons(64, 0.1, 3).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let mut config = short_config(11);
        config.phases = vec![Phase {
            iterations: 50,
            eta_w: 0.0,
            eta_q: 0.0,
            eta_l: 0.0,
        }];
        let (state, _) = train(&data, kernel, 4, &config).unwrap();
        let fresh = ModelState::init(4, 2, kernel, config.lambda, config.seed);
        assert_eq!(state, fresh, "no-op training must be bit-exact");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let data = make_half_moons(100, 0.1, 0).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let (s1, l1) = train(&data, kernel, 3, &short_config(7)).unwrap();
        let (s2, l2) = train(&data, kernel, 3, &short_config(7)).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(l1.records.len(), l2.records.len());
        for (a, b) in l1.records.iter().zip(&l2.records) {
            // Everything except wall time replays exactly.
            assert_eq!(a.iter, b.iter);
            assert_eq!(a.mean_energy.to_bits(), b.mean_energy.to_bits());
            assert_eq!(a.grad_w_norm.to_bits(), b.grad_w_norm.to_bits());
        }
        let (s3, _) = train(&data, kernel, 3, &short_config(8)).unwrap();
        assert_ne!(s1, s3, "different seeds should give different runs");
    }

    #[test]
    fn single_step_matches_a_hand_stepped_oracle() {
        // Two points, one unit, linear kernel, batch = whole dataset: every
        // quantity is computable by scalar arithmetic.
        let x0 = [1.0, 0.0];
        let x1 = [0.0, 1.0];
        let data = crate::data::Dataset::new(
            DMatrix::from_row_slice(2, 2, &[x0[0], x0[1], x1[0], x1[1]]),
            None,
            "pair",
        )
        .unwrap();
        let lambda = 0.1;
        let config = TrainConfig {
            batch_size: 2,
            phases: vec![Phase {
                iterations: 1,
                eta_w: 0.01,
                eta_q: 0.02,
                eta_l: 0.1,
            }],
            lambda,
            seed: 5,
            ..TrainConfig::default()
        };
        let (state, _) = train(&data, Kernel::Linear, 1, &config).unwrap();

        // Oracle: replicate initialization, then one exact update.
        let init = ModelState::init(1, 2, Kernel::Linear, lambda, 5);
        let (w0, w1) = (init.w[(0, 0)], init.w[(0, 1)]);
        let (q, l) = (1.0f64, 1.0f64);
        let y0 = q * (w0 * x0[0] + w1 * x0[1]) / (l + lambda);
        let y1 = q * (w0 * x1[0] + w1 * x1[1]) / (l + lambda);

        let dw = [
            -(q / 2.0) * (y0 * x0[0] + y1 * x1[0]) + q * q * w0,
            -(q / 2.0) * (y0 * x0[1] + y1 * x1[1]) + q * q * w1,
        ];
        let dq = -(y0 * (w0 * x0[0] + w1 * x0[1]) + y1 * (w0 * x1[0] + w1 * x1[1])) / 2.0
            + q * (w0 * w0 + w1 * w1);
        let dl = 0.5 * ((y0 * y0 + y1 * y1) / 2.0 - l);

        let step_w = 0.01 / (q * q).max(1e-4);
        let expect_w = [w0 - step_w * dw[0], w1 - step_w * dw[1]];
        let expect_q = q - 0.02 * dq;
        let expect_l = l + 0.1 * dl;

        assert!((state.w[(0, 0)] - expect_w[0]).abs() < 1e-12);
        assert!((state.w[(0, 1)] - expect_w[1]).abs() < 1e-12);
        assert!((state.q[0] - expect_q).abs() < 1e-12);
        assert!((state.l[(0, 0)] - expect_l).abs() < 1e-12);
    }

    #[test]
    fn lateral_matrix_stays_exactly_symmetric() {
        let data = make_half_moons(80, 0.1, 2).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let (state, _) = train(&data, kernel, 5, &short_config(1)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(
                    state.l[(i, j)].to_bits(),
                    state.l[(j, i)].to_bits(),
                    "L asymmetric at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn homogeneous_mode_pins_q_at_one() {
        let data = make_half_moons(80, 0.1, 4).unwrap();
        for kernel in [
            Kernel::Linear,
            Kernel::power_cosine(3).unwrap(),
            Kernel::homogeneous_polynomial(2).unwrap(),
        ] {
            let (state, _) = train_homogeneous(&data, kernel, 4, &short_config(9)).unwrap();
            for i in 0..4 {
                assert_eq!(state.q[i], 1.0, "{}: q moved", kernel.label());
            }
        }

        // The Gaussian has no homogeneity degree.
        let err = train_homogeneous(&data, Kernel::gaussian(0.3).unwrap(), 4, &short_config(0));
        assert!(err.is_err());
    }

    #[test]
    fn gain_elimination_identity() {
        // Σ_t q y_t f(x_t,w) − ½q²f(w,w) = Σ_t y_t f(x_t,w′) − ½f(w′,w′)
        // with w′ = q^{1/α} w, for every homogeneous kernel.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for kernel in [
            Kernel::Linear,
            Kernel::power_cosine(2).unwrap(),
            Kernel::power_cosine(3).unwrap(),
            Kernel::homogeneous_polynomial(2).unwrap(),
            Kernel::homogeneous_polynomial(3).unwrap(),
        ] {
            let alpha = kernel.homogeneity().unwrap();
            for _ in 0..40 {
                let m = rng.random_range(1..5);
                let t = rng.random_range(1..6);
                let q: f64 = rng.random_range(0.1..3.0);
                let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let wp: Vec<f64> = w.iter().map(|&v| q.powf(1.0 / alpha) * v).collect();
                let xs: Vec<Vec<f64>> = (0..t)
                    .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();

                let lhs: f64 = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| q * y * kernel.eval(x, &w).unwrap())
                    .sum::<f64>()
                    - 0.5 * q * q * kernel.eval(&w, &w).unwrap();
                let rhs: f64 = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| y * kernel.eval(x, &wp).unwrap())
                    .sum::<f64>()
                    - 0.5 * kernel.eval(&wp, &wp).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                    "{}: {lhs} vs {rhs}",
                    kernel.label()
                );
            }
        }
    }

    #[test]
    fn log_records_land_on_the_documented_iterations() {
        let data = make_half_moons(64, 0.1, 0).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let mut config = short_config(3);
        config.phases[0].iterations = 250;
        config.log_every = 100;
        let (_, log) = train(&data, kernel, 2, &config).unwrap();
        let iters: Vec<usize> = log.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![1, 100, 200, 250]);
        // Wall clock is non-decreasing.
        for w in log.records.windows(2) {
            assert!(w[1].wall_ms >= w[0].wall_ms);
        }
    }

    #[test]
    fn observer_fires_at_phase_boundaries() {
        let data = make_half_moons(64, 0.1, 0).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let mut config = short_config(2);
        config.phases = vec![
            Phase {
                iterations: 20,
                eta_w: 0.01,
                eta_q: 0.01,
                eta_l: 0.1,
            },
            Phase {
                iterations: 30,
                eta_w: 0.001,
                eta_q: 0.001,
                eta_l: 0.01,
            },
        ];
        let mut seen = Vec::new();
        let (final_state, _) =
            train_observed(&data, kernel, 3, &config, |pi, s| seen.push((pi, s.clone())))
                .unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0].0, 0);
        assert_eq!(seen[1].0, 1);
        assert_eq!(seen[1].1, final_state, "last boundary state is the result");
        assert_ne!(seen[0].1, final_state);
    }

    #[test]
    fn smoke_convergence_on_tiny_half_moons() {
        // N=4 on a small sample: the approximation error must drop from init.
        let data = make_half_moons(200, 0.1, 0).unwrap();
        let kernel = Kernel::gaussian(0.3).unwrap();
        let config = TrainConfig {
            phases: vec![
                Phase {
                    iterations: 1500,
                    eta_w: 0.01,
                    eta_q: 0.01,
                    eta_l: 0.1,
                },
                Phase {
                    iterations: 500,
                    eta_w: 0.001,
                    eta_q: 0.001,
                    eta_l: 0.01,
                },
            ],
            seed: 0,
            ..TrainConfig::default()
        };

        let gram = kernel.gram(&data.x);
        let init = ModelState::init(4, 2, kernel, config.lambda, config.seed);
        let before = analysis::nrmse(&gram, &init.response_closed_form(&data.x).unwrap().y).unwrap();
        let (state, log) = train(&data, kernel, 4, &config).unwrap();
        let after = analysis::nrmse(&gram, &state.response_closed_form(&data.x).unwrap().y).unwrap();
        assert!(
            after < before,
            "training should reduce the approximation error: {before} -> {after}"
        );
        assert!(!log.records.is_empty());
    }

    #[test]
    fn trainlog_csv_shape() {
        let log = TrainLog {
            records: vec![TrainRecord {
                iter: 1,
                mean_energy: -0.5,
                grad_w_norm: 1.25,
                grad_q_norm: 0.5,
                grad_l_norm: 0.25,
                wall_ms: 12.3456,
            }],
        };
        let mut buf = Vec::new();
        log.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,mean_energy,grad_w_norm,grad_q_norm,grad_l_norm,wall_ms"
        );
        assert_eq!(lines.next().unwrap(), "1,-0.5,1.25,0.5,0.25,12.346");
    }
}
