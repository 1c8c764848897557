//! The limiting random flight process: a Markov chain of (flight length,
//! exit parameter) pairs driving a piecewise-linear motion at unit speed.
//!
//! Between collisions the particle moves along V_{j-1} for a distance xi_j;
//! at a collision the exit parameter eta_j is drawn from the kernel row
//! K0(eta_{j-1}, .) and the velocity turns by the scattering matrix
//! S(eta_j). Displacements grow superdiffusively: the natural normalization
//! of Q_n is sigma_2 sqrt(n ln n) with sigma_2 = 1/(2 pi).

use rand::Rng;
use std::io::Write;

use crate::geom::{norm, sub, Direction, Vec2};
use crate::kernel2d::{canon, sample_initial, xi_quantile, InitialLaw, ZTable};
use crate::scattering::{frame_rotation2, scatter_matrix2, ScatterModel, VelocityAccumulator};
use crate::{Error, Result};

/// sigma_2^2 = 1/(4 pi^2): variance constant of the discrete-time
/// superdiffusive normalization sigma_2 sqrt(n ln n).
pub const SIGMA2_SQ: f64 = 1.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);

/// Free-path tail constant for d = 2: P(xi > x) ~ (THETA2 / 2) x^-2.
pub const THETA2: f64 = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Mean free path under the stationary collision law.
pub const MEAN_FREE_PATH: f64 = 0.5;

/// Default step cap for in-memory trajectories.
pub const STEP_CAP: u64 = 100_000_000;

pub fn sigma2() -> f64 {
    SIGMA2_SQ.sqrt()
}

/// Current state of the chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub eta: f64,
    pub v: Vec2,
    pub q: Vec2,
    pub tau: f64,
    pub n: u64,
    acc: VelocityAccumulator<2>,
}

impl ChainState {
    pub fn new(v0: Direction<2>, eta0: f64) -> Self {
        ChainState {
            eta: eta0,
            v: v0.0,
            q: [0.0, 0.0],
            tau: 0.0,
            n: 0,
            acc: VelocityAccumulator::new(frame_rotation2(v0)),
        }
    }

    /// Applies one already-sampled step (flight xi, then scattering with
    /// exit parameter z).
    fn apply(&mut self, xi: f64, z: f64, model: &ScatterModel) -> Result<StepRecord> {
        let v_prev = self.v;
        let eta_prev = self.eta;
        self.q[0] += xi * v_prev[0];
        self.q[1] += xi * v_prev[1];
        self.tau += xi;
        let s = scatter_matrix2(z, model)?;
        self.v = self.acc.advance(&s);
        self.eta = z;
        self.n += 1;
        Ok(StepRecord {
            j: self.n,
            xi,
            eta_prev,
            eta: z,
            v_prev,
            v: self.v,
            q: self.q,
            tau: self.tau,
        })
    }
}

/// Everything produced by one chain step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub j: u64,
    pub xi: f64,
    pub eta_prev: f64,
    pub eta: f64,
    pub v_prev: Vec2,
    pub v: Vec2,
    pub q: Vec2,
    pub tau: f64,
}

/// Samples the transition (z then xi | z) and advances the state.
pub fn advance<R: Rng + ?Sized>(
    state: &mut ChainState,
    table: &ZTable,
    model: &ScatterModel,
    rng: &mut R,
) -> Result<StepRecord> {
    let z = table.sample(state.eta, rng);
    let q: f64 = rng.sample(rand::distr::Open01);
    let xi = xi_quantile(&canon(state.eta, z), q);
    state.apply(xi, z, model)
}

/// Full specification of one chain realization.
#[derive(Debug, Clone)]
pub struct ChainSpec<'a> {
    pub steps: u64,
    pub init: InitialLaw,
    pub v0: Direction<2>,
    pub model: &'a ScatterModel,
    pub table: &'a ZTable,
    pub seed: u64,
    pub index: u64,
}

/// Runs the chain, streaming each step to `observe`; returns the final
/// state. Memory use is O(1), so arbitrarily long chains are fine.
pub fn run_chain<F: FnMut(&StepRecord)>(spec: &ChainSpec, mut observe: F) -> Result<ChainState> {
    if spec.steps < 1 {
        return Err(Error::domain("chain needs at least one step"));
    }
    let mut rng = crate::rng::stream(spec.seed, spec.index);
    let first = sample_initial(spec.init, spec.table, &mut rng)?;
    let mut state = ChainState::new(spec.v0, first.eta0);
    let rec = state.apply(first.xi1, first.eta1, spec.model)?;
    observe(&rec);
    for _ in 1..spec.steps {
        let rec = advance(&mut state, spec.table, spec.model, &mut rng)?;
        observe(&rec);
    }
    Ok(state)
}

/// Per-collision arrays of one realization; index j runs 0..=n with the
/// convention xi[0] = 0, q[0] = origin, tau[0] = 0.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub v: Vec<Vec2>,
    pub q: Vec<Vec2>,
    pub tau: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl Trajectory {
    /// Number of collisions n.
    pub fn steps(&self) -> usize {
        self.xi.len() - 1
    }
}

/// Simulates and stores a full trajectory. A deterministic function of
/// (seed, index) and the configuration.
pub fn simulate(spec: &ChainSpec) -> Result<Trajectory> {
    if spec.steps > STEP_CAP {
        return Err(Error::Resource(format!(
            "{} steps exceed the in-memory cap {STEP_CAP}; use run_chain streaming",
            spec.steps
        )));
    }
    let n = spec.steps as usize;
    let mut t = Trajectory {
        xi: Vec::with_capacity(n + 1),
        eta: Vec::with_capacity(n + 1),
        v: Vec::with_capacity(n + 1),
        q: Vec::with_capacity(n + 1),
        tau: Vec::with_capacity(n + 1),
        seed: spec.seed,
        index: spec.index,
    };
    t.xi.push(0.0);
    t.tau.push(0.0);
    t.q.push([0.0, 0.0]);
    let mut first = true;
    run_chain(spec, |rec| {
        if first {
            t.eta.push(rec.eta_prev);
            t.v.push(rec.v_prev);
            first = false;
        }
        t.xi.push(rec.xi);
        t.eta.push(rec.eta);
        t.v.push(rec.v);
        t.q.push(rec.q);
        t.tau.push(rec.tau);
    })?;
    Ok(t)
}

/// Position at continuous time t: linear motion from the last collision at
/// or before t.
pub fn position_at(traj: &Trajectory, t: f64) -> Result<Vec2> {
    if !(t >= 0.0) {
        return Err(Error::Range(format!("time {t} before trajectory start")));
    }
    let tau = &traj.tau;
    let last = *tau.last().unwrap();
    if t > last {
        return Err(Error::Range(format!("time {t} beyond trajectory end {last}")));
    }
    // nu = max { j : tau_j <= t }
    let nu = match tau.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
        Ok(j) => j,
        Err(j) => j - 1,
    };
    let q = traj.q[nu];
    let v = traj.v[nu];
    let dt = t - tau[nu];
    Ok([q[0] + dt * v[0], q[1] + dt * v[1]])
}

/// The rescaled piecewise-linear path Y_n(t) for t in [0, 1]:
/// (Q_{floor(nt)} + {nt} (Q_{floor(nt)+1} - Q_{floor(nt)})) / (sigma_2 sqrt(n ln n)).
pub fn interpolated_path(traj: &Trajectory, n: usize, t: f64) -> Result<Vec2> {
    if n < 3 || n > traj.steps() {
        return Err(Error::Range(format!(
            "path length n = {n} outside [3, {}]",
            traj.steps()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Range(format!("path parameter t = {t} outside [0, 1]")));
    }
    let nt = n as f64 * t;
    let j = (nt.floor() as usize).min(n - 1);
    let frac = nt - j as f64;
    let (a, b) = (traj.q[j], traj.q[j + 1]);
    let scale = sigma2() * (n as f64 * (n as f64).ln()).sqrt();
    Ok([(a[0] + frac * (b[0] - a[0])) / scale, (a[1] + frac * (b[1] - a[1])) / scale])
}

/// Truncation radius r_j = sqrt(j (ln j)^gamma); zero for j < 3, where the
/// asymptotic definition is meaningless and truncation is forced.
pub fn truncation_radius(j: u64, gamma: f64) -> f64 {
    if j < 3 {
        return 0.0;
    }
    let jf = j as f64;
    (jf * jf.ln().powf(gamma)).sqrt()
}

/// Streaming accumulator for the truncation diagnostics of one chain:
/// conditional means m_j, variances a_j^2, their running sum A_n^2, and the
/// centered truncated displacement.
#[derive(Debug, Clone)]
pub struct TruncationStream {
    gamma: f64,
    pub a2_sum: f64,
    pub q_prime: Vec2,
    pub q_tilde: Vec2,
    pub m_sum: f64,
}

impl TruncationStream {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::domain(format!("gamma = {gamma} outside (1, 2)")));
        }
        Ok(TruncationStream {
            gamma,
            a2_sum: 0.0,
            q_prime: [0.0, 0.0],
            q_tilde: [0.0, 0.0],
            m_sum: 0.0,
        })
    }

    /// Feeds one step record; returns (m_j, a_j^2).
    pub fn push(&mut self, rec: &StepRecord) -> (f64, f64) {
        let r = truncation_radius(rec.j, self.gamma);
        let c = canon(rec.eta_prev, rec.eta);
        let k0 = c.k0_reduced();
        let m = c.k1_trunc_reduced(r) / k0;
        let b2 = c.k2_trunc_reduced(r) / k0;
        let a2 = (b2 - m * m).max(0.0);
        self.a2_sum += a2;
        self.m_sum += m;
        let xi_trunc = if rec.xi * rec.xi <= r * r { rec.xi } else { 0.0 };
        let centered = xi_trunc - m;
        self.q_prime[0] += xi_trunc * rec.v_prev[0];
        self.q_prime[1] += xi_trunc * rec.v_prev[1];
        self.q_tilde[0] += centered * rec.v_prev[0];
        self.q_tilde[1] += centered * rec.v_prev[1];
        (m, a2)
    }
}

/// Per-collision truncation diagnostics of a stored trajectory.
#[derive(Debug, Clone)]
pub struct TruncationDiagnostics {
    pub gamma: f64,
    /// m_j for j = 1..=n.
    pub m: Vec<f64>,
    /// a_j^2 for j = 1..=n.
    pub a2: Vec<f64>,
    /// Running sums A_j^2 for j = 1..=n.
    pub a2_running: Vec<f64>,
    /// Truncated displacement sum of xi'_j V_{j-1}.
    pub q_prime: Vec2,
    /// Centered truncated displacement sum of (xi'_j - m_j) V_{j-1}.
    pub q_tilde: Vec2,
}

pub fn truncation_diagnostics(traj: &Trajectory, gamma: f64) -> Result<TruncationDiagnostics> {
    let n = traj.steps();
    if n < 3 {
        return Err(Error::Degenerate(format!("trajectory has {n} steps, need >= 3")));
    }
    let mut stream = TruncationStream::new(gamma)?;
    let mut m = Vec::with_capacity(n);
    let mut a2 = Vec::with_capacity(n);
    let mut a2_running = Vec::with_capacity(n);
    for j in 1..=n {
        let rec = StepRecord {
            j: j as u64,
            xi: traj.xi[j],
            eta_prev: traj.eta[j - 1],
            eta: traj.eta[j],
            v_prev: traj.v[j - 1],
            v: traj.v[j],
            q: traj.q[j],
            tau: traj.tau[j],
        };
        let (mj, a2j) = stream.push(&rec);
        m.push(mj);
        a2.push(a2j);
        a2_running.push(stream.a2_sum);
    }
    Ok(TruncationDiagnostics {
        gamma,
        m,
        a2,
        a2_running,
        q_prime: stream.q_prime,
        q_tilde: stream.q_tilde,
    })
}

/// Writes the per-collision arrays as CSV: header row, LF endings, 17
/// significant digits.
pub fn write_csv<W: Write>(traj: &Trajectory, out: &mut W) -> std::io::Result<()> {
    out.write_all(b"j,xi,eta,vx,vy,qx,qy,tau\n")?;
    for j in 0..=traj.steps() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            j,
            traj.xi[j],
            traj.eta[j],
            traj.v[j][0],
            traj.v[j][1],
            traj.q[j][0],
            traj.q[j][1],
            traj.tau[j]
        )?;
    }
    Ok(())
}

/// Unit-speed defect of a trajectory: max |(|Q_j - Q_{j-1}|) - xi_j| over j.
pub fn unit_speed_defect(traj: &Trajectory) -> f64 {
    let mut worst = 0.0f64;
    for j in 1..=traj.steps() {
        let step = norm(&sub(&traj.q[j], &traj.q[j - 1]));
        worst = worst.max((step - traj.xi[j]).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_table() -> ZTable {
        ZTable::with_resolution(256, 512)
    }

    fn spec<'a>(
        steps: u64,
        init: InitialLaw,
        model: &'a ScatterModel,
        table: &'a ZTable,
        seed: u64,
        index: u64,
    ) -> ChainSpec<'a> {
        ChainSpec { steps, init, v0: Direction::new([1.0, 0.0]).unwrap(), model, table, seed, index }
    }

    #[test]
    fn single_step_geometry() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(1, InitialLaw::Custom(0.5), &model, &table, 9, 0)).unwrap();
        assert_eq!(t.steps(), 1);
        assert_eq!(t.eta[0], 0.5);
        let x0 = crate::kernel2d::support_x0(0.5, t.eta[1]).unwrap();
        assert!(t.xi[1] > 0.0 && t.xi[1] < x0);
        // Q_1 = xi_1 e1
        assert_abs_diff_eq!(t.q[1][0], t.xi[1], epsilon = 1e-15);
        assert_abs_diff_eq!(t.q[1][1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_in_seed_and_index() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let a = simulate(&spec(500, InitialLaw::StationaryDiscrete, &model, &table, 42, 3)).unwrap();
        let b = simulate(&spec(500, InitialLaw::StationaryDiscrete, &model, &table, 42, 3)).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.tau, b.tau);
        let c = simulate(&spec(500, InitialLaw::StationaryDiscrete, &model, &table, 42, 4)).unwrap();
        assert_ne!(a.q[500], c.q[500]);
    }

    #[test]
    fn step_cap_is_enforced() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let err = simulate(&spec(STEP_CAP + 1, InitialLaw::StationaryDiscrete, &model, &table, 1, 0));
        assert!(matches!(err, Err(Error::Resource(_))));
    }

    #[test]
    fn additivity_and_unit_speed() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(2000, InitialLaw::StationaryDiscrete, &model, &table, 7, 1)).unwrap();
        // tau_n = sum of xi_j, strictly increasing
        let mut acc = 0.0;
        for j in 1..=t.steps() {
            assert!(t.xi[j] > 0.0);
            acc += t.xi[j];
            assert!(t.tau[j] > t.tau[j - 1]);
        }
        assert_abs_diff_eq!(acc, t.tau[t.steps()], epsilon = 1e-9);
        assert!(unit_speed_defect(&t) < 1e-12);
    }

    #[test]
    fn position_at_knots_and_midpoints() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(100, InitialLaw::StationaryDiscrete, &model, &table, 5, 0)).unwrap();
        // bit-exact at knots
        for j in [0usize, 1, 17, 50, 100] {
            let x = position_at(&t, t.tau[j]).unwrap();
            assert_eq!(x[0].to_bits(), t.q[j][0].to_bits());
            assert_eq!(x[1].to_bits(), t.q[j][1].to_bits());
        }
        // midpoint between knots lies halfway
        let tm = 0.5 * (t.tau[3] + t.tau[4]);
        let x = position_at(&t, tm).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(x[i], 0.5 * (t.q[3][i] + t.q[4][i]), epsilon = 1e-12);
        }
        assert!(position_at(&t, t.tau[100] + 1.0).is_err());
        assert!(position_at(&t, -0.1).is_err());
    }

    #[test]
    fn interpolated_path_endpoints() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(64, InitialLaw::StationaryDiscrete, &model, &table, 5, 2)).unwrap();
        let y0 = interpolated_path(&t, 64, 0.0).unwrap();
        assert_eq!(y0, [0.0, 0.0]);
        let y1 = interpolated_path(&t, 64, 1.0).unwrap();
        let scale = sigma2() * (64.0 * 64.0f64.ln()).sqrt();
        assert_abs_diff_eq!(y1[0], t.q[64][0] / scale, epsilon = 1e-14);
        assert_abs_diff_eq!(y1[1], t.q[64][1] / scale, epsilon = 1e-14);
        assert!(interpolated_path(&t, 2, 0.5).is_err());
        assert!(interpolated_path(&t, 65, 0.5).is_err());
        // sigma_2 value
        assert_abs_diff_eq!(sigma2(), 0.15915494309189535, epsilon = 1e-16);
    }

    #[test]
    fn truncation_diagnostics_basics() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(500, InitialLaw::StationaryDiscrete, &model, &table, 11, 0)).unwrap();
        assert!(truncation_diagnostics(&t, 1.0).is_err());
        assert!(truncation_diagnostics(&t, 2.0).is_err());
        let d = truncation_diagnostics(&t, 1.5).unwrap();
        assert_eq!(d.m.len(), 500);
        // m_j <= min(mu_j, r_j)
        for j in 1..=500u64 {
            let r = truncation_radius(j, 1.5);
            let mom = crate::kernel2d::moments(t.eta[j as usize - 1], t.eta[j as usize]).unwrap();
            let mu = mom.k1 / mom.k0;
            let m = d.m[j as usize - 1];
            assert!(m <= mu + 1e-12 && m <= r + 1e-12);
            assert!(d.a2[j as usize - 1] >= 0.0);
        }
        // A_n^2 nondecreasing
        for p in d.a2_running.windows(2) {
            assert!(p[1] >= p[0]);
        }
        // truncation inactive => Q' = Q
        if (1..=500).all(|j| t.xi[j] <= truncation_radius(j as u64, 1.5)) {
            assert_abs_diff_eq!(d.q_prime[0], t.q[500][0], epsilon = 1e-9);
        }
    }

    #[test]
    fn csv_export_format() {
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let t = simulate(&spec(3, InitialLaw::StationaryDiscrete, &model, &table, 2, 0)).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j,xi,eta,vx,vy,qx,qy,tau\n"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 5);
        // 17 significant digits round-trip
        let line1 = text.lines().nth(2).unwrap();
        let xi: f64 = line1.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(xi.to_bits(), t.xi[1].to_bits());
    }

    #[test]
    fn stationary_marginal_stays_uniform() {
        // two-sample KS between eta_1 and eta_100 samples (law is
        // n-independent under the stationary start)
        let table = small_table();
        let model = ScatterModel::HardSphere;
        let n_traj = 4000;
        let mut eta1 = Vec::with_capacity(n_traj);
        let mut eta100 = Vec::with_capacity(n_traj);
        for i in 0..n_traj {
            let mut first = f64::NAN;
            let mut last = f64::NAN;
            run_chain(
                &spec(100, InitialLaw::StationaryDiscrete, &model, &table, 77, i as u64),
                |rec| {
                    if rec.j == 1 {
                        first = rec.eta;
                    }
                    if rec.j == 100 {
                        last = rec.eta;
                    }
                },
            )
            .unwrap();
            eta1.push(first);
            eta100.push(last);
        }
        let ks = crate::stats::two_sample_ks(&mut eta1, &mut eta100);
        // null scale ~ 1.63 sqrt(2/n) = 0.036 at n = 4000
        assert!(ks < 0.05, "ks = {ks}");
    }
}
