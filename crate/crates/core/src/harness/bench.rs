//! Iteration-count study of the moment-conversion solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::closure::ClosureSpec;
use crate::moments::{ClosureState, PrimitiveMoments, Vec4};
use crate::solvers::{conversion_solve, random_unit_vector, Engine, LambdaRule, SolverConfig};

/// Settings of the solver study.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub closure: ClosureSpec,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            v: (0..20).map(|i| i as f64 * 0.05).collect(),
            h: (0..20).map(|i| i as f64 * 0.05).chain([0.99]).collect(),
            trials: 100,
            seed: 1,
            tol: 1e-8,
            max_iter: 1000,
            closure: ClosureSpec::default(),
        }
    }
}

/// Initial guess of the conversion solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `M⁰ = (N, 0)`.
    Isotropic,
    /// `M⁰ = U = (N, G)`.
    Conserved,
}

impl InitialGuess {
    pub fn label(&self) -> &'static str {
        match self {
            InitialGuess::Isotropic => "N0",
            InitialGuess::Conserved => "NG",
        }
    }
}

/// Mean iteration count of one solver configuration at one `(v, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub v: f64,
    pub h: f64,
    pub engine: String,
    pub lambda: String,
    pub guess: String,
    pub mean_iterations: f64,
    pub failures: usize,
    pub all_realizable: bool,
}

/// The solver configurations compared: engine × λ rule × initial guess.
pub fn bench_configurations() -> Vec<(Engine, LambdaRule, InitialGuess)> {
    let mut out = Vec::new();
    for engine in [Engine::Picard, Engine::Anderson { m: 1 }] {
        for lambda in [LambdaRule::Fixed(0.5), LambdaRule::InverseOnePlusV] {
            for guess in [InitialGuess::Isotropic, InitialGuess::Conserved] {
                out.push((engine, lambda, guess));
            }
        }
    }
    out
}

fn engine_label(e: Engine) -> String {
    match e {
        Engine::Picard => "picard".into(),
        Engine::Anderson { m } => format!("anderson{m}"),
    }
}

fn lambda_label(l: LambdaRule) -> String {
    match l {
        LambdaRule::InverseOnePlusV => "inv1pv".into(),
        LambdaRule::Fixed(x) => format!("{x}"),
    }
}

/// Random conversion problems at fixed `(v, h)`: `(U, v)` pairs built from
/// `D = 1` with random flux and velocity directions.
pub fn bench_problems(rng: &mut ChaCha8Rng, v: f64, h: f64, trials: usize, spec: &ClosureSpec) -> Vec<(Vec4, [f64; 3])> {
    (0..trials)
        .map(|_| {
            let nv = random_unit_vector(rng);
            let ni = random_unit_vector(rng);
            let vel = [v * nv[0], v * nv[1], v * nv[2]];
            let m = PrimitiveMoments::new(1.0, [h * ni[0], h * ni[1], h * ni[2]]).to_array();
            (ClosureState::new(&m, spec).conserved(&vel), vel)
        })
        .collect()
}

/// Run the study; every configuration solves the same problems.
pub fn solver_bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for &v in &cfg.v {
        for &h in &cfg.h {
            let problems = bench_problems(&mut rng, v, h, cfg.trials, &cfg.closure);
            for (engine, lambda, guess) in bench_configurations() {
                let solver = SolverConfig {
                    engine,
                    tol: cfg.tol,
                    max_iter: cfg.max_iter,
                    lambda_rule: lambda,
                };
                let mut total = 0usize;
                let mut failures = 0usize;
                let mut all_realizable = true;
                for (u, vel) in &problems {
                    let m0 = match guess {
                        InitialGuess::Isotropic => [u[0], 0.0, 0.0, 0.0],
                        InitialGuess::Conserved => *u,
                    };
                    let (_, rep) = conversion_solve(u, vel, &m0, &solver, &cfg.closure);
                    total += rep.iterations;
                    failures += usize::from(!rep.converged);
                    all_realizable &= rep.realizable_every_iterate;
                }
                rows.push(BenchRow {
                    v,
                    h,
                    engine: engine_label(engine),
                    lambda: lambda_label(lambda),
                    guess: guess.label().into(),
                    mean_iterations: total as f64 / cfg.trials.max(1) as f64,
                    failures,
                    all_realizable,
                });
            }
        }
    }
    rows
}
