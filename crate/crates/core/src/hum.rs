//! The HUM control solver: the Lambda operator chaining an adjoint solve
//! and a controlled solve, conjugate gradient on the filtered mode subspace,
//! control extraction, replay verification, and the two-stage admissible
//! controls used for the minimal-norm comparison.
//!
//! The adjoint problem is parametrized by its state at t = T and marched
//! backward, and the controlled problem runs forward from the initial data —
//! the time-mirror of the textbook chain, equivalent by the exact time
//! symmetry of the leapfrog engine. In that parametrization Lambda is
//! assembled as R W^{-1} R^T, where R maps a control signal to the kept
//! modal coefficients of the terminal state of the physical replay (nodal
//! Dirichlet injection or nodal forcing on omega) and W holds the trapezoid
//! quadrature weights of the control norm. R^T is the exact algebraic
//! transpose of the replay, realized as a backward leapfrog whose
//! observation is the co-normal trace (boundary control) or the subdomain
//! restriction (internal control) of a genuine discrete adjoint wave.
//!
//! Consequences, all exact to roundoff: Lambda is symmetric positive
//! semidefinite; its quadratic form equals the observed energy of the
//! adjoint trajectory; the control norm identity ||v||^2 = <Lambda phi, phi>
//! holds; and the replayed control annihilates the kept subspace of the
//! terminal state up to the CG residual. What remains of the discretization
//! is the spurious excitation of the unkept band by the replay, which is
//! reported separately and shrinks with the filter fraction.

use serde::Serialize;

use crate::dynamics::{
    self, Direction, EndCondition, ForcingSpec, SampledField, SimulationInput, State, Trajectory,
};
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::grid::{dirichlet_eigenpairs, CoefficientField, Grid1D, ModeSet};
use crate::observability::{kept_modes, omega_weight, time_weight};

/// Where the control acts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ControlKind {
    Boundary(Side),
    /// Inclusive node index interval of the control subdomain.
    Internal { omega: (usize, usize) },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CgConfig {
    pub tol: f64,
    /// Defaults to the dimension of the kept subspace.
    pub max_iter: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig { tol: 1e-8, max_iter: None }
    }
}

#[derive(Debug, Clone)]
pub struct HUMProblem {
    pub grid: Grid1D,
    pub field: CoefficientField,
    pub kind: ControlKind,
    pub horizon: f64,
    pub dt: f64,
    pub filter_fraction: f64,
    pub cg: CgConfig,
}

/// Adjoint data (phi0, phi1) on interior nodes, reported at t = 0.
#[derive(Debug, Clone)]
pub struct AdjointData {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
}

/// The extracted control: a boundary signal or a space-time field on omega.
#[derive(Debug, Clone, Serialize)]
pub enum Control {
    Boundary { side: Side, signal: Vec<f64> },
    Internal { omega: (usize, usize), field: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    /// Terminal deviation energy measured in the kept (filtered) subspace,
    /// over the larger of the initial and target energies; filtering is
    /// applied to the outputs of the pipeline, the replay among them.
    pub terminal_energy_ratio: f64,
    /// Same ratio on the raw terminal state. The unkept band carries the
    /// spurious high-frequency excitation that raw discrete controls are
    /// known to produce; it is physical to the discretization, not to the
    /// controlled wave.
    pub raw_terminal_energy_ratio: f64,
    pub initial_energy: f64,
    pub terminal_energy: f64,
    /// Set when both the initial and the target state carry zero energy.
    pub trivially_satisfied: bool,
    pub control_l2_norm_sq: f64,
}

#[derive(Debug, Clone)]
pub struct HUMSolution {
    pub adjoint: AdjointData,
    pub control: Control,
    /// <Lambda phi, phi> = observed energy of the adjoint trajectory
    /// = control norm squared.
    pub control_norm_sq: f64,
    pub cg_history: Vec<f64>,
    pub cg_iterations: usize,
    pub verification: Verification,
}

/// Lambda assembled over a fixed problem; the eigenbasis is computed once
/// and shared by every apply.
pub struct HumSolver {
    pub problem: HUMProblem,
    modes: ModeSet,
    pub k_keep: usize,
    n_levels: usize,
    potential: Option<SampledField>,
    /// Constant source on the right-hand side of the state equation
    /// (the -f(0) term of linearized semilinear problems).
    source: f64,
}

impl HumSolver {
    pub fn new(problem: HUMProblem) -> Result<Self> {
        Self::with_potential(problem, None, 0.0)
    }

    /// Solver for the potential-perturbed wave y'' - (a y_x)_x + V y = h - source.
    pub fn with_potential(
        problem: HUMProblem,
        potential: Option<SampledField>,
        source: f64,
    ) -> Result<Self> {
        let grid = &problem.grid;
        if !(problem.horizon > 0.0) {
            return Err(Error::config("horizon must be positive"));
        }
        let steps_f = problem.horizon / problem.dt;
        let n_steps = steps_f.round() as usize;
        if n_steps == 0 || (steps_f - n_steps as f64).abs() > 1e-9 {
            return Err(Error::config("dt must divide the horizon"));
        }
        if let ControlKind::Internal { omega } = problem.kind {
            if omega.0 > omega.1 || omega.1 >= grid.n_nodes() {
                return Err(Error::config("control subdomain out of range"));
            }
        }
        if let Some(p) = &potential {
            if p.values.len() != n_steps + 1 {
                return Err(Error::config("potential must be sampled at every time level"));
            }
        }
        let k_keep = kept_modes(grid.n_interior(), problem.filter_fraction)?;
        let modes = dirichlet_eigenpairs(grid, &problem.field, k_keep)?;
        Ok(HumSolver {
            problem,
            modes,
            k_keep,
            n_levels: n_steps + 1,
            potential,
            source,
        })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    /// Dimension of the modal unknown.
    pub fn dim(&self) -> usize {
        2 * self.k_keep
    }

    fn grid(&self) -> &Grid1D {
        &self.problem.grid
    }

    fn n_steps(&self) -> usize {
        self.n_levels - 1
    }

    /// Interior vector from kept modal coefficients.
    fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let m = self.grid().n_interior();
        let mut out = vec![0.0; m];
        for (k, ck) in c.iter().enumerate() {
            let mode = self.modes.mode(k);
            for j in 0..m {
                out[j] += ck * mode[j];
            }
        }
        out
    }

    fn full_from_interior(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid().n_nodes()];
        out[1..self.grid().n_cells].copy_from_slice(v);
        out
    }

    /// Kept modal coefficients of a full-node state (L^2 analysis).
    fn kept_coeffs(&self, state: &State) -> Vec<f64> {
        let grid = self.grid();
        let inner_y = &state.y[1..grid.n_cells];
        let inner_v = &state.v[1..grid.n_cells];
        let mut out = Vec::with_capacity(self.dim());
        for k in 0..self.k_keep {
            out.push(self.modes.coefficient(grid.h, inner_y, k));
        }
        for k in 0..self.k_keep {
            out.push(self.modes.coefficient(grid.h, inner_v, k));
        }
        out
    }

    /// Width of one time level of the control signal.
    fn signal_width(&self) -> usize {
        match self.problem.kind {
            ControlKind::Boundary(_) => 1,
            ControlKind::Internal { omega } => omega.1 - omega.0 + 1,
        }
    }

    /// Quadrature weight of one flattened signal entry.
    fn signal_weight(&self, flat: usize) -> f64 {
        match self.problem.kind {
            ControlKind::Boundary(_) => time_weight(flat, self.n_levels, self.problem.dt),
            ControlKind::Internal { omega } => {
                let width = omega.1 - omega.0 + 1;
                let (n, i) = (flat / width, flat % width);
                time_weight(n, self.n_levels, self.problem.dt)
                    * omega_weight(omega.0 + i, omega.0, omega.1, self.grid().h)
            }
        }
    }

    /// Weighted signal inner product <w, g>_Sigma.
    pub fn signal_product(&self, w: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), g.len());
        w.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (a, b))| self.signal_weight(i) * a * b)
            .sum()
    }

    /// G_j p = 2p + dt^2 (L p - V^j p) on interior vectors.
    fn apply_g(&self, level: usize, p: &[f64]) -> Vec<f64> {
        let dt = self.problem.dt;
        let mut out = crate::grid::apply_operator(self.grid(), &self.problem.field, p);
        if let Some(v) = &self.potential {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= v.at(level, i + 1) * p[i];
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = 2.0 * p[i] + dt * dt * *o;
        }
        out
    }

    /// The backward adjoint-multiplier run: a discrete wave p determined by
    /// the terminal parametrization w, sampled into the control signal
    /// v = W^{-1} R^T w. Also returns the two final levels (p^1, p^0) for
    /// the exact reconstruction of the adjoint trajectory data at t = 0.
    fn extract_signal(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let grid = self.grid();
        let m = grid.n_interior();
        let dt = self.problem.dt;
        let n = self.n_steps();
        let (w0, w1) = w.split_at(self.k_keep);
        let cap_w0: Vec<f64> = self.synthesize(w0).iter().map(|v| grid.h * v).collect();
        let cap_w1: Vec<f64> = self.synthesize(w1).iter().map(|v| grid.h * v).collect();

        // Sampling functional of one level: v-entry(s) = dt <s_tilde, p^n>.
        let sample = |p: &[f64], out: &mut Vec<f64>| match self.problem.kind {
            ControlKind::Boundary(side) => {
                let (slot, a_edge) = match side {
                    Side::Left => (0, self.problem.field.values[0]),
                    Side::Right => (m - 1, self.problem.field.values[grid.n_cells - 1]),
                };
                out.push(dt * a_edge / (grid.h * grid.h) * p[slot]);
            }
            ControlKind::Internal { omega } => {
                for node in omega.0..=omega.1 {
                    if node >= 1 && node <= m {
                        out.push(dt / grid.h * p[node - 1]);
                    } else {
                        out.push(0.0);
                    }
                }
            }
        };

        // Sources of the transposed recursion: q^{N+1} = W1/(2dt),
        // q^N = W0, q^{N-1} = -W1/(2dt).
        let q = |j: usize| -> Option<Vec<f64>> {
            if j == n + 1 {
                Some(cap_w1.iter().map(|v| v / (2.0 * dt)).collect())
            } else if j == n {
                Some(cap_w0.clone())
            } else if j + 1 == n {
                Some(cap_w1.iter().map(|v| -v / (2.0 * dt)).collect())
            } else {
                None
            }
        };

        // p^{j-1} = q^j + G_j p^j - p^{j+1}, p down from N+1; collect samples
        // in reverse level order, then flip.
        let mut rev_samples: Vec<f64> = Vec::with_capacity(self.n_levels * self.signal_width());
        let mut p_next = vec![0.0; m]; // p^{j+1}
        let mut p_cur = vec![0.0; m]; // p^{j}
        for j in (1..=n + 1).rev() {
            let mut p_prev = if j <= n {
                self.apply_g(j, &p_cur)
            } else {
                vec![0.0; m]
            };
            if let Some(src) = q(j) {
                for (o, s) in p_prev.iter_mut().zip(&src) {
                    *o += s;
                }
            }
            for (o, pn) in p_prev.iter_mut().zip(&p_next) {
                *o -= pn;
            }
            // p_prev = p^{j-1}: sample level j-1.
            sample(&p_prev, &mut rev_samples);
            p_next = std::mem::replace(&mut p_cur, p_prev);
        }
        // rev_samples holds levels N, N-1, .., 0 (level N sampled first via
        // p^N produced at j = N+1). Flip into forward order.
        let width = self.signal_width();
        let mut signal = vec![0.0; self.n_levels * width];
        for (rev_lvl, chunk) in rev_samples.chunks(width).enumerate() {
            let lvl = n - rev_lvl;
            signal[lvl * width..(lvl + 1) * width].copy_from_slice(chunk);
        }
        // The terminal level doubles: the multiplier run jumps by W1/(2dt)
        // across the terminal source, and the doubled sample is exactly the
        // trace of the continued (simulatable) adjoint wave there, keeping
        // v entrywise equal to the observation series of that wave.
        for v in signal[n * width..].iter_mut() {
            *v *= 2.0;
        }
        // p_cur = p^0, p_next = p^1.
        (signal, p_cur, p_next)
    }

    /// The physical replay response to a control signal from rest: kept
    /// modal coefficients of the terminal state.
    fn replay_response(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let zero = State::zero(self.grid());
        let traj = self.simulate_with_signal(zero, signal, true, 0.0)?;
        Ok(self.kept_coeffs(traj.final_state()?))
    }

    /// Forward run with the control signal applied physically (nodal
    /// Dirichlet data or trapezoid-weighted nodal forcing on omega).
    fn simulate_with_signal(
        &self,
        initial: State,
        signal: &[f64],
        store_states: bool,
        source: f64,
    ) -> Result<Trajectory> {
        let grid = self.grid();
        let mut input = SimulationInput::free(
            grid,
            &self.problem.field,
            initial,
            self.problem.horizon,
            self.problem.dt,
        );
        input.potential = self.potential.clone();
        input.store_states = store_states;
        match self.problem.kind {
            ControlKind::Boundary(side) => {
                let data = EndCondition::DirichletData(signal.to_vec());
                match side {
                    Side::Left => input.bc.left = data,
                    Side::Right => input.bc.right = data,
                }
                input.forcing = constant_source_forcing(grid, self.n_levels, source);
            }
            ControlKind::Internal { omega } => {
                let width = omega.1 - omega.0 + 1;
                let mut f = SampledField::zeros(self.n_levels, (omega.0, omega.1));
                for (lvl, row) in f.values.iter_mut().enumerate() {
                    for (i, v) in row.iter_mut().enumerate() {
                        // chi_omega in its trapezoid discretization: the
                        // subdomain edges act with half weight.
                        let node = omega.0 + i;
                        let edge = omega_weight(node, omega.0, omega.1, grid.h) / grid.h;
                        *v = edge * signal[lvl * width + i];
                    }
                }
                if source != 0.0 {
                    let nn = grid.n_nodes();
                    let mut full = SampledField::zeros(self.n_levels, (1, nn - 2));
                    for (lvl, row) in full.values.iter_mut().enumerate() {
                        for (i, v) in row.iter_mut().enumerate() {
                            *v = -source + f.at(lvl, i + 1);
                        }
                    }
                    input.forcing = ForcingSpec::Internal(full);
                } else {
                    input.forcing = ForcingSpec::Internal(f);
                }
            }
        }
        dynamics::simulate(input)
    }

    /// Lambda w = R W^{-1} R^T w in the terminal modal parametrization.
    pub fn apply_lambda_modal(&self, w: &[f64]) -> Result<Vec<f64>> {
        let (signal, _, _) = self.extract_signal(w);
        self.replay_response(&signal)
    }

    /// Terminal parametrization of given adjoint data: simulates the
    /// homogeneous adjoint forward from (phi0, phi1) and inverts the
    /// terminal relations of the multiplier run, so that extract_signal of
    /// the result samples exactly this adjoint wave.
    pub fn w_from_adjoint_data(&self, data: &AdjointData) -> Result<Vec<f64>> {
        let m = self.grid().n_interior();
        if data.phi0.len() != m || data.phi1.len() != m {
            return Err(Error::config("adjoint data must live on interior nodes"));
        }
        let traj = {
            let y = self.full_from_interior(&data.phi0);
            let v = self.full_from_interior(&data.phi1);
            let mut input = SimulationInput::free(
                self.grid(),
                &self.problem.field,
                State::new(y, v, 0.0),
                self.problem.horizon,
                self.problem.dt,
            );
            input.potential = self.potential.clone();
            dynamics::simulate(input)?
        };
        let states = traj.states.as_ref().expect("states recorded");
        let n = self.n_steps();
        let phi_last: Vec<f64> = states[n].y[1..self.grid().n_cells].to_vec();
        let phi_prev: Vec<f64> = states[n - 1].y[1..self.grid().n_cells].to_vec();
        let dt = self.problem.dt;
        let h = self.grid().h;
        // W1 = h phi^N; W0 = (h/dt)(phi^{N-1} - G_N phi^N / 2).
        let g_last = self.apply_g(n, &phi_last);
        let cap_w0: Vec<f64> = phi_prev
            .iter()
            .zip(&g_last)
            .map(|(p, g)| h / dt * (p - 0.5 * g))
            .collect();
        let cap_w1: Vec<f64> = phi_last.iter().map(|p| h * p).collect();
        let mut w = Vec::with_capacity(self.dim());
        for k in 0..self.k_keep {
            w.push(crate::grid::dot(self.modes.mode(k), &cap_w0));
        }
        for k in 0..self.k_keep {
            w.push(crate::grid::dot(self.modes.mode(k), &cap_w1));
        }
        Ok(w)
    }

    /// Spec-shaped apply on adjoint data: the chain runs the adjoint and
    /// the controlled problem through the mirrored parametrization; the
    /// output is the filtered nodal representation of the resulting state
    /// functional pair.
    pub fn apply_lambda(&self, data: &AdjointData) -> Result<(Vec<f64>, Vec<f64>)> {
        let w = self.w_from_adjoint_data(data)?;
        let out = self.apply_lambda_modal(&w)?;
        let (a, b) = out.split_at(self.k_keep);
        Ok((self.synthesize(a), self.synthesize(b)))
    }

    /// Duality pairing of two modal vectors (plain dot product).
    pub fn pairing(u: &[f64], w: &[f64]) -> f64 {
        crate::grid::dot(u, w)
    }

    /// Adjoint trajectory reconstructed from the multiplier run: data
    /// (phi0, phi1) at t = 0 whose forward simulation reproduces the run
    /// exactly (two leapfrog levels determine the wave).
    fn adjoint_data_from_run(&self, p0: &[f64], p1: &[f64]) -> AdjointData {
        let grid = self.grid();
        let dt = self.problem.dt;
        let scale = dt / grid.h;
        let phi0: Vec<f64> = p0.iter().map(|v| scale * v).collect();
        let phi1_level: Vec<f64> = p1.iter().map(|v| scale * v).collect();
        // Invert the Taylor start: v0 = (y1 - y0 - dt^2/2 (L-V0) y0)/dt.
        let l0 = self.apply_g(0, &phi0);
        let phi1: Vec<f64> = (0..phi0.len())
            .map(|i| {
                let half_step = 0.5 * (l0[i] - 2.0 * phi0[i]); // dt^2/2 (L-V)y0
                (phi1_level[i] - phi0[i] - half_step) / dt
            })
            .collect();
        AdjointData { phi0, phi1 }
    }

    /// Simulates the adjoint trajectory of the given solution data.
    pub fn adjoint_trajectory(&self, adjoint: &AdjointData) -> Result<Trajectory> {
        let y = self.full_from_interior(&adjoint.phi0);
        let v = self.full_from_interior(&adjoint.phi1);
        let mut input = SimulationInput::free(
            self.grid(),
            &self.problem.field,
            State::new(y, v, 0.0),
            self.problem.horizon,
            self.problem.dt,
        );
        input.potential = self.potential.clone();
        input.store_states = matches!(self.problem.kind, ControlKind::Internal { .. });
        dynamics::simulate(input)
    }

    /// Solves the control problem for data (y0, y1), steering to `target`
    /// (rest when absent), and verifies by replay.
    pub fn solve(
        &self,
        y0: &[f64],
        y1: &[f64],
        target: Option<(&[f64], &[f64])>,
    ) -> Result<HUMSolution> {
        let nn = self.grid().n_nodes();
        if y0.len() != nn || y1.len() != nn {
            return Err(Error::config("state data must live on the full node set"));
        }
        // Target shift: evolve the target backward through the uncontrolled
        // system and control the difference xi = y - z to rest. A nonzero
        // constant source makes even the rest target need the shift.
        let rest: (Vec<f64>, Vec<f64>);
        let target = if target.is_none() && self.source != 0.0 {
            rest = (vec![0.0; nn], vec![0.0; nn]);
            Some((rest.0.as_slice(), rest.1.as_slice()))
        } else {
            target
        };
        let (shift0, shift1, target_state) = match target {
            None => (y0.to_vec(), y1.to_vec(), None),
            Some((z0, z1)) => {
                let mut input = SimulationInput::free(
                    self.grid(),
                    &self.problem.field,
                    State::new(z0.to_vec(), z1.to_vec(), 0.0),
                    self.problem.horizon,
                    self.problem.dt,
                );
                input.potential = self.potential.clone();
                input.forcing =
                    constant_source_forcing(self.grid(), self.n_levels, self.source);
                input.direction = Direction::Backward;
                let back = dynamics::simulate(input)?;
                let z_at_0 = back.initial_state()?;
                let s0: Vec<f64> = y0.iter().zip(&z_at_0.y).map(|(a, b)| a - b).collect();
                let s1: Vec<f64> = y1.iter().zip(&z_at_0.v).map(|(a, b)| a - b).collect();
                (s0, s1, Some((z0.to_vec(), z1.to_vec())))
            }
        };

        // Right-hand side: minus the kept terminal coefficients of the
        // free evolution of the shifted data. The boundary entries of the
        // data belong to the control (H^1_0 data class), so the free run
        // sees them zeroed; the replay decomposes exactly as
        // free(interior data) + response(signal).
        let mut zeroed0 = shift0.clone();
        let mut zeroed1 = shift1.clone();
        zeroed0[0] = 0.0;
        *zeroed0.last_mut().unwrap() = 0.0;
        zeroed1[0] = 0.0;
        *zeroed1.last_mut().unwrap() = 0.0;
        let mut free = SimulationInput::free(
            self.grid(),
            &self.problem.field,
            State::new(zeroed0, zeroed1, 0.0),
            self.problem.horizon,
            self.problem.dt,
        );
        free.potential = self.potential.clone();
        let free_traj = dynamics::simulate(free)?;
        let rhs: Vec<f64> = self
            .kept_coeffs(free_traj.final_state()?)
            .iter()
            .map(|v| -v)
            .collect();

        let max_iter = self.problem.cg.max_iter.unwrap_or(self.dim());
        // The energy pairing realized diagonally, applied as the inverse
        // preconditioner so CG runs in the geometry where Lambda is well
        // conditioned. In the terminal parametrization the first block is
        // velocity-like (unit weight) and the second displacement-like
        // (weight lambda_k).
        let mut minv: Vec<f64> = vec![1.0; self.k_keep];
        minv.extend(
            self.modes.eigenvalues[..self.k_keep]
                .iter()
                .map(|l| 1.0 / l),
        );
        let (w, history) = conjugate_gradient(
            |v| self.apply_lambda_modal(v),
            &rhs,
            Some(&minv),
            self.problem.cg.tol,
            max_iter,
        )?;
        let cg_iterations = history.len().saturating_sub(1);

        let (signal, p0, p1) = self.extract_signal(&w);
        let lambda_w = self.replay_response(&signal)?;
        let control_norm_sq = Self::pairing(&lambda_w, &w).max(0.0);

        // The control is the signal the replay applies. For internal
        // control the adjoint is oriented so that h = -phi on omega.
        let control = match self.problem.kind {
            ControlKind::Boundary(side) => Control::Boundary { side, signal },
            ControlKind::Internal { omega } => {
                let width = omega.1 - omega.0 + 1;
                let field = signal.chunks(width).map(|row| row.to_vec()).collect();
                Control::Internal { omega, field }
            }
        };
        let adjoint = match self.problem.kind {
            ControlKind::Boundary(_) => self.adjoint_data_from_run(&p0, &p1),
            ControlKind::Internal { .. } => {
                let n0: Vec<f64> = p0.iter().map(|v| -v).collect();
                let n1: Vec<f64> = p1.iter().map(|v| -v).collect();
                self.adjoint_data_from_run(&n0, &n1)
            }
        };
        let verification = self.verify_control(
            &control,
            y0,
            y1,
            target_state.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
        )?;
        Ok(HUMSolution {
            adjoint,
            control,
            control_norm_sq,
            cg_history: history,
            cg_iterations,
            verification,
        })
    }

    /// Forward run with the control applied from the given data.
    pub fn replay(&self, control: &Control, y0: &[f64], y1: &[f64]) -> Result<Trajectory> {
        let signal = self.control_signal(control)?;
        self.simulate_with_signal(
            State::new(y0.to_vec(), y1.to_vec(), 0.0),
            &signal,
            true,
            self.source,
        )
    }

    /// Flattened signal of a control (internal controls flip sign back to
    /// the observation orientation h = -phi).
    fn control_signal(&self, control: &Control) -> Result<Vec<f64>> {
        match (control, self.problem.kind) {
            (Control::Boundary { signal, side }, ControlKind::Boundary(kind_side)) => {
                if *side != kind_side {
                    return Err(Error::config("control side does not match the problem"));
                }
                if signal.len() != self.n_levels {
                    return Err(Error::config("control signal length mismatch"));
                }
                Ok(signal.clone())
            }
            (Control::Internal { omega, field }, ControlKind::Internal { omega: ko }) => {
                if *omega != ko || field.len() != self.n_levels {
                    return Err(Error::config("control field does not match the problem"));
                }
                Ok(field.iter().flatten().copied().collect())
            }
            _ => Err(Error::config("control kind does not match the problem")),
        }
    }

    /// Replays the control and measures the terminal deviation from the
    /// target, filtered and raw.
    pub fn verify_control(
        &self,
        control: &Control,
        y0: &[f64],
        y1: &[f64],
        target: Option<(&[f64], &[f64])>,
    ) -> Result<Verification> {
        let traj = self.replay(control, y0, y1)?;
        let grid = self.grid();
        let field = &self.problem.field;
        let last = traj.final_state()?;
        let (dev_y, dev_v): (Vec<f64>, Vec<f64>) = match target {
            None => (last.y.clone(), last.v.clone()),
            Some((z0, z1)) => (
                last.y.iter().zip(z0).map(|(a, b)| a - b).collect(),
                last.v.iter().zip(z1).map(|(a, b)| a - b).collect(),
            ),
        };
        let raw_terminal =
            dynamics::energy(grid, field, &State::new(dev_y.clone(), dev_v.clone(), 0.0));
        let terminal = {
            let fy = self.keep_project(&dev_y);
            let fv = self.keep_project(&dev_v);
            dynamics::energy(grid, field, &State::new(fy, fv, 0.0))
        };
        let initial = dynamics::energy(grid, field, &State::new(y0.to_vec(), y1.to_vec(), 0.0));
        let target_energy = match target {
            None => 0.0,
            Some((z0, z1)) => {
                dynamics::energy(grid, field, &State::new(z0.to_vec(), z1.to_vec(), 0.0))
            }
        };
        let denom = initial.max(target_energy);
        let trivially_satisfied = denom == 0.0;
        let ratio_of = |t: f64| {
            if trivially_satisfied {
                if t == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                t / denom
            }
        };
        let signal = self.control_signal(control)?;
        Ok(Verification {
            terminal_energy_ratio: ratio_of(terminal),
            raw_terminal_energy_ratio: ratio_of(raw_terminal),
            initial_energy: initial,
            terminal_energy: terminal,
            trivially_satisfied,
            control_l2_norm_sq: self.signal_product(&signal, &signal),
        })
    }

    /// Projection of a full-node vector onto the kept modes.
    fn keep_project(&self, v: &[f64]) -> Vec<f64> {
        let grid = self.grid();
        let inner = &v[1..grid.n_cells];
        let coeffs: Vec<f64> = (0..self.k_keep)
            .map(|k| self.modes.coefficient(grid.h, inner, k))
            .collect();
        self.full_from_interior(&self.synthesize(&coeffs))
    }

    /// Two-stage admissible control: an arbitrary signal w on (0, eps), then
    /// HUM on (eps, T) from the reached state. The stage boundary drops the
    /// junction entry of w (the discrete control at a level acts on the
    /// following step, which belongs to stage two).
    pub fn two_stage_control(
        &self,
        y0: &[f64],
        y1: &[f64],
        w: &[f64],
        eps: f64,
    ) -> Result<TwoStageControl> {
        let side = match self.problem.kind {
            ControlKind::Boundary(side) => side,
            ControlKind::Internal { .. } => {
                return Err(Error::config("two-stage construction is a boundary-control device"))
            }
        };
        let dt = self.problem.dt;
        let n_eps_f = eps / dt;
        let n_eps = n_eps_f.round() as usize;
        if n_eps == 0 || (n_eps_f - n_eps as f64).abs() > 1e-9 {
            return Err(Error::config("eps must be a positive multiple of dt"));
        }
        if w.len() != n_eps + 1 {
            return Err(Error::config(format!(
                "w must carry {} levels over (0, eps)",
                n_eps + 1
            )));
        }
        let remaining = self.problem.horizon - eps;
        let threshold = 2.0 * self.grid().length() / self.problem.field.a0.sqrt();
        if remaining <= threshold {
            return Err(Error::config(format!(
                "eps too large: remaining horizon {remaining} at or below the control time {threshold}"
            )));
        }

        // Stage 1: drift under w.
        let mut input = SimulationInput::free(
            self.grid(),
            &self.problem.field,
            State::new(y0.to_vec(), y1.to_vec(), 0.0),
            eps,
            dt,
        );
        match side {
            Side::Left => input.bc.left = EndCondition::DirichletData(w.to_vec()),
            Side::Right => input.bc.right = EndCondition::DirichletData(w.to_vec()),
        }
        let stage1 = dynamics::simulate(input)?;
        let reached = stage1.final_state()?.clone();

        // Stage 2: HUM on the remaining horizon.
        let sub = HumSolver::new(HUMProblem {
            horizon: remaining,
            ..self.problem.clone()
        })?;
        let sol = sub.solve(&reached.y, &reached.v, None)?;
        let hum_signal = match &sol.control {
            Control::Boundary { signal, .. } => signal.clone(),
            Control::Internal { .. } => unreachable!(),
        };
        let mut signal = Vec::with_capacity(self.n_levels);
        signal.extend_from_slice(&w[..n_eps]);
        signal.extend_from_slice(&hum_signal);
        debug_assert_eq!(signal.len(), self.n_levels);
        Ok(TwoStageControl {
            side,
            signal,
            n_eps,
            stage2: sol,
            reached,
        })
    }

    /// Verifies a two-stage control by replaying its stages sequentially and
    /// measuring the filtered terminal energy.
    pub fn verify_two_stage(
        &self,
        ts: &TwoStageControl,
        y0: &[f64],
        y1: &[f64],
    ) -> Result<Verification> {
        let eps = ts.n_eps as f64 * self.problem.dt;
        let remaining = self.problem.horizon - eps;
        let sub = HumSolver::new(HUMProblem {
            horizon: remaining,
            ..self.problem.clone()
        })?;
        let control = Control::Boundary {
            side: ts.side,
            signal: ts.signal[ts.n_eps..].to_vec(),
        };
        let mut v = sub.verify_control(&control, &ts.reached.y, &ts.reached.v, None)?;
        // Rebase the ratios on the energy of the original data.
        let raw_terminal = v.raw_terminal_energy_ratio * v.initial_energy;
        let e0 = dynamics::energy(
            self.grid(),
            &self.problem.field,
            &State::new(y0.to_vec(), y1.to_vec(), 0.0),
        );
        v.initial_energy = e0;
        if e0 > 0.0 {
            v.terminal_energy_ratio = v.terminal_energy / e0;
            v.raw_terminal_energy_ratio = raw_terminal / e0;
        }
        v.control_l2_norm_sq = self.boundary_norm_sq(&ts.signal);
        Ok(v)
    }

    /// L^2(Sigma_0) norm squared of a boundary signal under the solver's
    /// quadrature.
    pub fn boundary_norm_sq(&self, signal: &[f64]) -> f64 {
        signal
            .iter()
            .enumerate()
            .map(|(n, v)| time_weight(n, signal.len(), self.problem.dt) * v * v)
            .sum()
    }
}

/// Two-stage construction output.
#[derive(Debug, Clone)]
pub struct TwoStageControl {
    pub side: Side,
    /// Concatenated signal over the full horizon.
    pub signal: Vec<f64>,
    pub n_eps: usize,
    pub stage2: HUMSolution,
    pub reached: State,
}

fn constant_source_forcing(grid: &Grid1D, n_levels: usize, source: f64) -> ForcingSpec {
    if source == 0.0 {
        return ForcingSpec::None;
    }
    let nn = grid.n_nodes();
    let mut f = SampledField::zeros(n_levels, (1, nn - 2));
    for row in f.values.iter_mut() {
        for v in row.iter_mut() {
            *v = -source;
        }
    }
    ForcingSpec::Internal(f)
}

/// Projection of a nodal vector onto the kept discrete eigenmodes.
pub struct SpectralFilter {
    modes: ModeSet,
    grid: Grid1D,
    pub k_keep: usize,
}

impl SpectralFilter {
    pub fn new(grid: &Grid1D, field: &CoefficientField, filter_fraction: f64) -> Result<Self> {
        let k_keep = kept_modes(grid.n_interior(), filter_fraction)?;
        let modes = dirichlet_eigenpairs(grid, field, k_keep)?;
        Ok(SpectralFilter { modes, grid: grid.clone(), k_keep })
    }

    /// Projects a full-node vector (boundary entries go to zero, their
    /// Dirichlet values).
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.grid.n_nodes() {
            return Err(Error::config("filter input must be a full node vector"));
        }
        let inner = &v[1..self.grid.n_cells];
        let mut out = vec![0.0; self.grid.n_nodes()];
        for k in 0..self.k_keep {
            let c = self.modes.coefficient(self.grid.h, inner, k);
            let mode = self.modes.mode(k);
            for j in 0..self.grid.n_interior() {
                out[j + 1] += c * mode[j];
            }
        }
        Ok(out)
    }

    pub fn apply_state(&self, s: &State) -> Result<State> {
        Ok(State::new(self.apply(&s.y)?, self.apply(&s.v)?, s.t))
    }
}

/// One-shot spectral projection (builds the eigenbasis on the fly; reuse
/// `SpectralFilter` for repeated application).
pub fn spectral_filter(
    grid: &Grid1D,
    field: &CoefficientField,
    v: &[f64],
    filter_fraction: f64,
) -> Result<Vec<f64>> {
    SpectralFilter::new(grid, field, filter_fraction)?.apply(v)
}

/// Preconditioned conjugate gradient on a matrix-free SPD operator, with
/// stagnation detection. `precond` holds the diagonal of M^{-1}; residual
/// norms (and the returned history, first entry = initial residual) are
/// measured in the M^{-1} inner product, the natural norm of the iteration.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    rhs: &[f64],
    precond: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = rhs.len();
    let minv = |r: &[f64]| -> Vec<f64> {
        match precond {
            Some(d) => r.iter().zip(d).map(|(v, m)| v * m).collect(),
            None => r.to_vec(),
        }
    };
    let mut x = vec![0.0; dim];
    let mut r = rhs.to_vec();
    let mut z = minv(&r);
    let mut rz = crate::grid::dot(&r, &z);
    let norm0 = rz.sqrt();
    let mut history = vec![norm0];
    if norm0 == 0.0 {
        return Ok((x, history));
    }
    let mut p = z.clone();
    let mut stagnant = 0usize;
    for _ in 0..max_iter {
        let ap = apply(&p)?;
        let pap = crate::grid::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::numerical(format!(
                "operator lost positive definiteness (p^T A p = {pap:.3e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = minv(&r);
        let rz_new = crate::grid::dot(&r, &z);
        let norm = rz_new.max(0.0).sqrt();
        if norm >= *history.last().unwrap() {
            stagnant += 1;
            if stagnant >= 20 {
                return Err(Error::CgStagnation { history });
            }
        } else {
            stagnant = 0;
        }
        history.push(norm);
        if norm <= tol * norm0 {
            return Ok((x, history));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..dim {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::numerical(format!(
        "cg failed to reach tol {tol:.1e} within {max_iter} iterations (residual {:.3e})",
        history.last().unwrap() / norm0
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{suggest_dt, CFL_DEFAULT};
    use crate::grid::{build_grid, sample_coefficient, unit_coefficient};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use std::f64::consts::PI;

    fn boundary_problem(n: usize, horizon: f64, filter: f64) -> HUMProblem {
        let grid = build_grid(0.0, 1.0, n).unwrap();
        let field = unit_coefficient(&grid);
        let dt = suggest_dt(&grid, &field, horizon, CFL_DEFAULT).unwrap();
        HUMProblem {
            grid,
            field,
            kind: ControlKind::Boundary(Side::Right),
            horizon,
            dt,
            filter_fraction: filter,
            cg: CgConfig::default(),
        }
    }

    fn random_modal(solver: &HumSolver, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        (0..solver.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn extract_signal_is_exact_transpose_of_replay() {
        // <R g, w> = <g, R^T w>_plain = sum tau_n v_n g_n: the linchpin of
        // the whole construction, checked for every control kind with and
        // without a potential.
        for kind in [
            ControlKind::Boundary(Side::Right),
            ControlKind::Boundary(Side::Left),
            ControlKind::Internal { omega: (20, 45) },
        ] {
            for with_potential in [false, true] {
                let grid = build_grid(0.0, 1.0, 60).unwrap();
                let field = unit_coefficient(&grid);
                let dt = suggest_dt(&grid, &field, 1.3, CFL_DEFAULT).unwrap();
                let n_levels = (1.3f64 / dt).round() as usize + 1;
                let problem = HUMProblem {
                    grid: grid.clone(),
                    field: field.clone(),
                    kind,
                    horizon: 1.3,
                    dt,
                    filter_fraction: 0.5,
                    cg: CgConfig::default(),
                };
                let potential = with_potential.then(|| {
                    let mut p = SampledField::zeros(n_levels, (1, grid.n_cells - 1));
                    for (lvl, row) in p.values.iter_mut().enumerate() {
                        for (i, v) in row.iter_mut().enumerate() {
                            *v = 3.0 * ((i + lvl) as f64 * 0.13).sin();
                        }
                    }
                    p
                });
                let solver = HumSolver::with_potential(problem, potential, 0.0).unwrap();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
                for _ in 0..3 {
                    let w = random_modal(&solver, &mut rng);
                    let (v, _, _) = solver.extract_signal(&w);
                    let g: Vec<f64> =
                        (0..v.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let rg = solver.replay_response(&g).unwrap();
                    let lhs = HumSolver::pairing(&rg, &w);
                    let rhs = solver.signal_product(&g, &v);
                    assert!(
                        (lhs - rhs).abs() <= 1e-10 * (lhs.abs() + rhs.abs()).max(1e-12),
                        "{kind:?} potential={with_potential}: transpose defect {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn lambda_zero_and_linearity() {
        let solver = HumSolver::new(boundary_problem(80, 2.2, 0.5)).unwrap();
        let zero = vec![0.0; solver.dim()];
        let out = solver.apply_lambda_modal(&zero).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z = random_modal(&solver, &mut rng);
        let l1 = solver.apply_lambda_modal(&z).unwrap();
        let z2: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        let l2 = solver.apply_lambda_modal(&z2).unwrap();
        for (a, b) in l2.iter().zip(&l1) {
            assert!((a - 2.0 * b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn lambda_symmetric_and_positive() {
        for kind in [
            ControlKind::Boundary(Side::Right),
            ControlKind::Internal { omega: (24, 56) },
        ] {
            let mut problem = boundary_problem(80, 2.3, 0.4);
            problem.kind = kind;
            let solver = HumSolver::new(problem).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
            for _ in 0..20 {
                let u = random_modal(&solver, &mut rng);
                let w = random_modal(&solver, &mut rng);
                let lu = solver.apply_lambda_modal(&u).unwrap();
                let lw = solver.apply_lambda_modal(&w).unwrap();
                let uw = HumSolver::pairing(&lu, &w);
                let wu = HumSolver::pairing(&lw, &u);
                let scale = uw.abs().max(wu.abs()).max(1e-30);
                assert!(
                    (uw - wu).abs() / scale <= 1e-8,
                    "{kind:?}: symmetry defect {}",
                    (uw - wu).abs() / scale
                );
                let q = HumSolver::pairing(&lu, &u);
                assert!(q > 0.0, "{kind:?}: form not positive on nonzero data: {q}");
            }
        }
    }

    #[test]
    fn quadratic_form_equals_observed_energy() {
        use crate::observability::{observed_energy, ObservationKind, ObservationSpec};
        for (kind, okind) in [
            (
                ControlKind::Boundary(Side::Right),
                ObservationKind::Boundary(Side::Right),
            ),
            (
                ControlKind::Internal { omega: (30, 70) },
                ObservationKind::InternalDisplacement(30, 70),
            ),
        ] {
            let mut problem = boundary_problem(120, 2.0, 0.5);
            problem.kind = kind;
            let solver = HumSolver::new(problem).unwrap();
            // Random filtered adjoint data.
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            let coeffs: Vec<f64> =
                (0..solver.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (c0, c1) = coeffs.split_at(solver.k_keep);
            let data = AdjointData {
                phi0: solver.synthesize(c0),
                phi1: solver.synthesize(c1),
            };
            let w = solver.w_from_adjoint_data(&data).unwrap();
            let lw = solver.apply_lambda_modal(&w).unwrap();
            let form = HumSolver::pairing(&lw, &w);
            let traj = solver.adjoint_trajectory(&data).unwrap();
            let spec = ObservationSpec { kind: okind, horizon: 2.0 };
            let observed = observed_energy(&traj, &spec).unwrap();
            assert_relative_eq!(form, observed, max_relative = 1e-6);
        }
    }

    #[test]
    fn quadratic_form_of_first_mode_near_pi_squared() {
        // <Lambda phi, phi> for the adjoint (sin(pi x), 0) at T = 2
        // approximates int_0^2 pi^2 cos^2(pi t) dt = pi^2.
        let solver = HumSolver::new(boundary_problem(200, 2.0, 0.5)).unwrap();
        let grid = solver.grid();
        let data = AdjointData {
            phi0: (1..grid.n_cells).map(|j| (PI * grid.node(j)).sin()).collect(),
            phi1: vec![0.0; grid.n_interior()],
        };
        let w = solver.w_from_adjoint_data(&data).unwrap();
        let lw = solver.apply_lambda_modal(&w).unwrap();
        let form = HumSolver::pairing(&lw, &w);
        assert_relative_eq!(form, PI * PI, max_relative = 1e-2);
    }

    #[test]
    fn solve_zero_data_zero_control() {
        let solver = HumSolver::new(boundary_problem(60, 2.2, 0.5)).unwrap();
        let nn = solver.grid().n_nodes();
        let sol = solver.solve(&vec![0.0; nn], &vec![0.0; nn], None).unwrap();
        assert_eq!(sol.cg_iterations, 0);
        match &sol.control {
            Control::Boundary { signal, .. } => assert!(signal.iter().all(|v| *v == 0.0)),
            _ => panic!(),
        }
        assert!(sol.verification.trivially_satisfied);
    }

    #[test]
    fn boundary_hum_controls_first_mode() {
        // Acceptance-grade configuration: n = 200, T = 2.5, filter 0.4.
        let problem = boundary_problem(200, 2.5, 0.4);
        let solver = HumSolver::new(problem).unwrap();
        let init = State::mode(solver.grid(), 1);
        let sol = solver.solve(&init.y, &init.v, None).unwrap();
        assert!(
            sol.verification.terminal_energy_ratio <= 1e-3,
            "terminal ratio {}",
            sol.verification.terminal_energy_ratio
        );
        assert!(sol.cg_iterations <= 60, "cg took {}", sol.cg_iterations);
        assert_relative_eq!(
            sol.verification.control_l2_norm_sq,
            sol.control_norm_sq,
            max_relative = 1e-6
        );
        let h = &sol.cg_history;
        assert!(h.last().unwrap() <= &(1e-8 * h[0]));
    }

    #[test]
    fn velocity_data_and_steering() {
        let problem = boundary_problem(200, 2.5, 0.4);
        let solver = HumSolver::new(problem).unwrap();
        // Velocity-type data.
        let grid = solver.grid().clone();
        let y0 = vec![0.0; grid.n_nodes()];
        let y1: Vec<f64> = grid.nodes().iter().map(|&x| PI * (PI * x).sin()).collect();
        let sol = solver.solve(&y0, &y1, None).unwrap();
        assert!(
            sol.verification.terminal_energy_ratio <= 1e-3,
            "velocity-data ratio {}",
            sol.verification.terminal_energy_ratio
        );
        // Steering from rest to a state.
        let target = State::mode(&grid, 1);
        let sol = solver
            .solve(&y0, &vec![0.0; grid.n_nodes()], Some((&target.y, &target.v)))
            .unwrap();
        assert!(
            sol.verification.terminal_energy_ratio <= 1e-3,
            "steering ratio {}",
            sol.verification.terminal_energy_ratio
        );
        assert!(!sol.verification.trivially_satisfied);
    }

    #[test]
    fn internal_hum_controls_variable_coefficient() {
        // BV coefficient with a0 = 1, omega = (0.3, 0.7), T = 2 > 2R = 1.4.
        let grid = build_grid(0.0, 1.0, 150).unwrap();
        let field = sample_coefficient(&grid, |x| if x < 0.45 { 1.0 } else { 1.8 }).unwrap();
        let dt = suggest_dt(&grid, &field, 2.0, CFL_DEFAULT).unwrap();
        let (j0, j1) = grid.node_range(0.3, 0.7).unwrap();
        let problem = HUMProblem {
            grid: grid.clone(),
            field,
            kind: ControlKind::Internal { omega: (j0, j1) },
            horizon: 2.0,
            dt,
            filter_fraction: 0.4,
            cg: CgConfig::default(),
        };
        let solver = HumSolver::new(problem).unwrap();
        let init = State::mode(&grid, 1);
        let sol = solver.solve(&init.y, &init.v, None).unwrap();
        assert!(
            sol.verification.terminal_energy_ratio <= 1e-2,
            "terminal ratio {}",
            sol.verification.terminal_energy_ratio
        );
        assert!(
            sol.verification.raw_terminal_energy_ratio <= 1e-2,
            "raw terminal ratio {}",
            sol.verification.raw_terminal_energy_ratio
        );
    }

    #[test]
    fn verifier_rejects_truncated_control() {
        let problem = boundary_problem(200, 2.5, 0.4);
        let solver = HumSolver::new(problem).unwrap();
        let init = State::mode(solver.grid(), 1);
        let sol = solver.solve(&init.y, &init.v, None).unwrap();
        let mut signal = match &sol.control {
            Control::Boundary { signal, .. } => signal.clone(),
            _ => unreachable!(),
        };
        let half = signal.len() / 2;
        for v in signal.iter_mut().skip(half) {
            *v = 0.0;
        }
        let truncated = Control::Boundary { side: Side::Right, signal };
        let bad = solver.verify_control(&truncated, &init.y, &init.v, None).unwrap();
        assert!(
            bad.terminal_energy_ratio > 0.1,
            "truncated control should fail, got {}",
            bad.terminal_energy_ratio
        );
    }

    #[test]
    fn control_map_is_linear() {
        let problem = boundary_problem(100, 2.4, 0.4);
        let solver = HumSolver::new(problem).unwrap();
        let init = State::mode(solver.grid(), 2);
        let sol1 = solver.solve(&init.y, &init.v, None).unwrap();
        let scaled_y: Vec<f64> = init.y.iter().map(|v| -1.5 * v).collect();
        let scaled_v: Vec<f64> = init.v.iter().map(|v| -1.5 * v).collect();
        let sol2 = solver.solve(&scaled_y, &scaled_v, None).unwrap();
        let (s1, s2) = match (&sol1.control, &sol2.control) {
            (Control::Boundary { signal: a, .. }, Control::Boundary { signal: b, .. }) => (a, b),
            _ => unreachable!(),
        };
        let scale: f64 = s1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in s1.iter().zip(s2) {
            assert!(
                (b - (-1.5) * a).abs() <= 1e-7 * scale.max(1e-30),
                "control not linear"
            );
        }
    }

    #[test]
    fn two_stage_controls_cost_at_least_hum() {
        let problem = boundary_problem(100, 2.8, 0.4);
        let solver = HumSolver::new(problem.clone()).unwrap();
        let init = State::mode(solver.grid(), 1);
        let hum = solver.solve(&init.y, &init.v, None).unwrap();
        let hum_norm = hum.control_norm_sq.sqrt();

        let n_eps = (0.28 / problem.dt).round() as usize;
        let eps = n_eps as f64 * problem.dt;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for trial in 0..5 {
            let w: Vec<f64> = (0..=n_eps).map(|_| 0.5 * rng.gen_range(-1.0..1.0)).collect();
            let ts = solver.two_stage_control(&init.y, &init.v, &w, eps).unwrap();
            let norm = solver.boundary_norm_sq(&ts.signal).sqrt();
            assert!(
                norm >= hum_norm * 0.99,
                "trial {trial}: two-stage norm {norm} < HUM norm {hum_norm}"
            );
            let v = solver.verify_two_stage(&ts, &init.y, &init.v).unwrap();
            assert!(
                v.terminal_energy_ratio <= 1e-3,
                "trial {trial}: two-stage replay ratio {}",
                v.terminal_energy_ratio
            );
        }

        // w == 0 reproduces 0 ++ HUM-of-the-evolved-state.
        let w0 = vec![0.0; n_eps + 1];
        let ts = solver.two_stage_control(&init.y, &init.v, &w0, eps).unwrap();
        assert!(ts.signal[..n_eps].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn filter_is_projection() {
        let grid = build_grid(0.0, 1.0, 64).unwrap();
        let field = unit_coefficient(&grid);
        let f = SpectralFilter::new(&grid, &field, 0.5).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|&x| (x * 9.0).sin() * x * (1.0 - x)).collect();
        let once = f.apply(&v).unwrap();
        let twice = f.apply(&once).unwrap();
        let scale: f64 = once.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }

        // fraction 1 is the identity on zero-boundary vectors
        let id = SpectralFilter::new(&grid, &field, 1.0).unwrap();
        let mut v0 = v.clone();
        v0[0] = 0.0;
        *v0.last_mut().unwrap() = 0.0;
        let out = id.apply(&v0).unwrap();
        for (a, b) in out.iter().zip(&v0) {
            assert!((a - b).abs() <= 1e-10);
        }

        // top mode is annihilated at fraction 0.5
        let modes = dirichlet_eigenpairs(&grid, &field, grid.n_interior()).unwrap();
        let top = modes.mode(grid.n_interior() - 1);
        let mut full = vec![0.0; grid.n_nodes()];
        full[1..grid.n_cells].copy_from_slice(top);
        let out = f.apply(&full).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn cg_solves_small_system_and_detects_stagnation() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![
                a[0][0] * v[0] + a[0][1] * v[1],
                a[1][0] * v[0] + a[1][1] * v[1],
            ])
        };
        let (x, hist) = conjugate_gradient(apply, &[1.0, 2.0], None, 1e-12, 10).unwrap();
        assert_relative_eq!(4.0 * x[0] + x[1], 1.0, max_relative = 1e-10);
        assert_relative_eq!(x[0] + 3.0 * x[1], 2.0, max_relative = 1e-10);
        assert!(hist.len() <= 4);

        // A non-SPD "operator" whose search direction is orthogonal to its
        // output trips the definiteness/stagnation guards.
        let bad = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.0, 0.0]) };
        match conjugate_gradient(bad, &[0.0, 1.0], None, 1e-14, 1000) {
            Err(Error::CgStagnation { .. }) | Err(Error::Numerical(_)) => {}
            other => panic!("expected stagnation-type failure, got {other:?}"),
        }
    }
}
