//! Exact solver for the Benders master problem: minimize a scalar epigraph
//! variable over binary pin vectors subject to linear optimality and
//! feasibility cuts.
//!
//! The solver is self-contained: LP relaxations are handled by a dense
//! bounded-variable two-phase simplex (Bland's rule, so no cycling), and the
//! binary search is a best-bound branch-and-bound with most-fractional
//! branching. Ties between equal-value binary optima are broken toward the
//! lexicographically smallest pin vector.

use crate::model::PinVector;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const TOL: f64 = 1e-9;
const INT_TOL: f64 = 1e-7;

/// One linear cut over the binary vector b.
///
/// `Optimality` encodes `eta >= coeffs . b + constant`; `Feasibility` encodes
/// `0 >= coeffs . b + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCut {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub kind: CutKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Optimality,
    Feasibility,
}

impl LinearCut {
    pub fn optimality(coeffs: Vec<f64>, constant: f64) -> Self {
        LinearCut { coeffs, constant, kind: CutKind::Optimality }
    }

    pub fn feasibility(coeffs: Vec<f64>, constant: f64) -> Self {
        LinearCut { coeffs, constant, kind: CutKind::Feasibility }
    }

    /// coeffs . b + constant at a (possibly fractional) point.
    pub fn eval(&self, b: &[f64]) -> f64 {
        self.coeffs.iter().zip(b).map(|(c, x)| c * x).sum::<f64>() + self.constant
    }

    pub fn eval_bits(&self, bits: &[bool]) -> f64 {
        self.coeffs
            .iter()
            .zip(bits)
            .map(|(c, &x)| if x { *c } else { 0.0 })
            .sum::<f64>()
            + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MasterStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub pins: PinVector,
    pub eta: f64,
    pub status: MasterStatus,
}

// ---------------------------------------------------------------------------
// Bounded-variable simplex
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
}

/// minimize c.x  s.t.  rows.x <= rhs,  lower <= x <= upper
struct DenseLp {
    n_struct: usize,
    cost: Vec<f64>,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
}

struct SimplexState {
    tableau: Vec<Vec<f64>>, // m rows x n_total columns
    basis: Vec<usize>,
    state: Vec<VarState>,
    values: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SimplexState {
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let n = self.state.len();
        let mut d = cost.to_vec();
        for (i, row) in self.tableau.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..n {
                    d[j] -= cb * row[j];
                }
            }
        }
        d
    }

    /// One bounded-simplex phase with Bland's rule; returns false if the
    /// objective is unbounded below.
    fn optimize(&mut self, cost: &[f64]) -> bool {
        let m = self.tableau.len();
        let n = self.state.len();
        for _round in 0..50_000 {
            let d = self.reduced_costs(cost);
            let mut entering = None;
            for j in 0..n {
                if self.upper[j] - self.lower[j] <= 0.0 {
                    continue; // pinned variable, can never move
                }
                match self.state[j] {
                    VarState::AtLower if d[j] < -TOL => {
                        entering = Some((j, 1.0));
                        break;
                    }
                    VarState::AtUpper if d[j] > TOL => {
                        entering = Some((j, -1.0));
                        break;
                    }
                    _ => {}
                }
            }
            let Some((j_in, dir)) = entering else {
                return true;
            };

            // ratio test: smallest step where a basic variable hits a bound,
            // or the entering variable reaches its own opposite bound
            let span = self.upper[j_in] - self.lower[j_in];
            let mut best_t = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let w = self.tableau[i][j_in] * dir;
                let bidx = self.basis[i];
                let bv = self.values[bidx];
                let (t, at_lower) = if w > TOL {
                    ((bv - self.lower[bidx]) / w, true)
                } else if w < -TOL && self.upper[bidx].is_finite() {
                    ((self.upper[bidx] - bv) / (-w), false)
                } else {
                    continue;
                };
                let t = t.max(0.0);
                let take = match leave {
                    None => t < f64::INFINITY,
                    // Bland tie-break: smallest basic variable index
                    Some((r, _)) => {
                        t < best_t - TOL || ((t - best_t).abs() <= TOL && bidx < self.basis[r])
                    }
                };
                if take && t < best_t + TOL {
                    best_t = best_t.min(t);
                    leave = Some((i, at_lower));
                }
            }

            if best_t > span {
                // entering variable flips to its other bound first
                if !span.is_finite() {
                    return false; // genuinely unbounded direction
                }
                best_t = span;
                leave = None;
            }
            let t = best_t.max(0.0).min(if span.is_finite() { span } else { f64::INFINITY });

            for i in 0..m {
                let w = self.tableau[i][j_in] * dir;
                let bidx = self.basis[i];
                self.values[bidx] -= w * t;
            }
            self.values[j_in] += dir * t;

            match leave {
                None => {
                    self.state[j_in] = match self.state[j_in] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        VarState::Basic => unreachable!("entering variable was basic"),
                    };
                    self.values[j_in] = if self.state[j_in] == VarState::AtUpper {
                        self.upper[j_in]
                    } else {
                        self.lower[j_in]
                    };
                }
                Some((r, at_lower)) => {
                    let out = self.basis[r];
                    self.values[out] = if at_lower { self.lower[out] } else { self.upper[out] };
                    self.state[out] = if at_lower { VarState::AtLower } else { VarState::AtUpper };
                    self.state[j_in] = VarState::Basic;
                    self.basis[r] = j_in;
                    let piv = self.tableau[r][j_in];
                    for v in self.tableau[r].iter_mut() {
                        *v /= piv;
                    }
                    let row_r = self.tableau[r].clone();
                    for (i, row) in self.tableau.iter_mut().enumerate() {
                        if i != r {
                            let factor = row[j_in];
                            if factor != 0.0 {
                                for (v, rv) in row.iter_mut().zip(&row_r) {
                                    *v -= factor * rv;
                                }
                            }
                        }
                    }
                }
            }
        }
        true // iteration guard; problems in this crate never get near it
    }
}

impl DenseLp {
    fn solve(&self) -> LpOutcome {
        let m = self.rows.len();
        let n = self.n_struct;
        let n_slack = m;

        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.extend(std::iter::repeat(0.0).take(n_slack));
        upper.extend(std::iter::repeat(f64::INFINITY).take(n_slack));

        let mut values = vec![0.0; n + n_slack];
        let mut state = vec![VarState::AtLower; n + n_slack];
        values[..n].copy_from_slice(&self.lower);

        let mut tableau: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut basis = vec![usize::MAX; m];
        let mut artificial_rows = Vec::new();
        for i in 0..m {
            let mut row = vec![0.0; n + n_slack];
            row[..n].copy_from_slice(&self.rows[i]);
            row[n + i] = 1.0;
            let slack0 =
                self.rhs[i] - self.rows[i].iter().zip(&values[..n]).map(|(a, x)| a * x).sum::<f64>();
            if slack0 >= -TOL {
                basis[i] = n + i;
                values[n + i] = slack0.max(0.0);
                state[n + i] = VarState::Basic;
            } else {
                // negate the row so the artificial can carry the +1 identity
                // column: -A_i x - s_i + a_i = -rhs_i, a_i = -slack0 > 0
                for v in row.iter_mut() {
                    *v = -*v;
                }
                artificial_rows.push((i, -slack0));
            }
            tableau.push(row);
        }

        let n_art = artificial_rows.len();
        let n_total = n + n_slack + n_art;
        for row in tableau.iter_mut() {
            row.resize(n_total, 0.0);
        }
        lower.extend(std::iter::repeat(0.0).take(n_art));
        upper.extend(std::iter::repeat(f64::INFINITY).take(n_art));
        values.resize(n_total, 0.0);
        state.resize(n_total, VarState::AtLower);

        for (a, &(i, amount)) in artificial_rows.iter().enumerate() {
            let col = n + n_slack + a;
            tableau[i][col] = 1.0;
            basis[i] = col;
            values[col] = amount;
            state[col] = VarState::Basic;
        }

        let mut sx = SimplexState { tableau, basis, state, values, lower, upper };

        if n_art > 0 {
            let mut phase1 = vec![0.0; n_total];
            for a in 0..n_art {
                phase1[n + n_slack + a] = 1.0;
            }
            sx.optimize(&phase1); // bounded below by 0
            let infeas: f64 = (0..n_art).map(|a| sx.values[n + n_slack + a]).sum();
            if infeas > 1e-7 {
                return LpOutcome::Infeasible;
            }
            for a in 0..n_art {
                let col = n + n_slack + a;
                sx.upper[col] = 0.0;
                sx.values[col] = 0.0;
            }
        }

        let mut cost = vec![0.0; n_total];
        cost[..n].copy_from_slice(&self.cost);
        if !sx.optimize(&cost) {
            return LpOutcome::Infeasible; // unbounded; callers give eta a floor
        }

        let x: Vec<f64> = sx.values[..n].to_vec();
        let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, objective }
    }
}

// ---------------------------------------------------------------------------
// LP relaxation of the master
// ---------------------------------------------------------------------------

/// Continuous relaxation of the master over b in [0,1]^M with pinned bits.
///
/// Returns the optimal value (a valid lower bound for every binary completion
/// of `fixed_bits`) and the relaxed b for branching-variable selection, or
/// `None` when the feasibility cuts exclude the whole box.
pub fn lp_relax(
    cuts: &[LinearCut],
    m: usize,
    eta_floor: f64,
    fixed_bits: &[Option<bool>],
) -> Option<(f64, Vec<f64>)> {
    assert!(m >= 1 && fixed_bits.len() == m);
    let n = m + 1; // b_0..b_{M-1}, eta
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    for (j, fb) in fixed_bits.iter().enumerate() {
        if let Some(v) = fb {
            let x = if *v { 1.0 } else { 0.0 };
            lower[j] = x;
            upper[j] = x;
        }
    }
    // Tight valid floor for eta keeps phase-1 values well scaled: the LP
    // optimum satisfies eta >= min_b cut_i(b) for every optimality cut.
    let mut eta_lo = eta_floor;
    for cut in cuts.iter().filter(|c| c.kind == CutKind::Optimality) {
        let mut lo = cut.constant;
        for (j, c) in cut.coeffs.iter().enumerate() {
            lo += match fixed_bits[j] {
                Some(true) => *c,
                Some(false) => 0.0,
                None => c.min(0.0),
            };
        }
        eta_lo = eta_lo.max(lo);
    }
    lower[m] = eta_lo;
    upper[m] = f64::INFINITY;

    let mut rows = Vec::with_capacity(cuts.len());
    let mut rhs = Vec::with_capacity(cuts.len());
    for cut in cuts {
        assert_eq!(cut.coeffs.len(), m, "cut dimension mismatch");
        let mut row = Vec::with_capacity(n);
        row.extend_from_slice(&cut.coeffs);
        match cut.kind {
            CutKind::Optimality => row.push(-1.0), // coeffs.b - eta <= -constant
            CutKind::Feasibility => row.push(0.0), // coeffs.b <= -constant
        }
        rows.push(row);
        rhs.push(-cut.constant);
    }

    let mut cost = vec![0.0; n];
    cost[m] = 1.0;

    let lp = DenseLp { n_struct: n, cost, rows, rhs, lower, upper };
    match lp.solve() {
        LpOutcome::Infeasible => None,
        LpOutcome::Optimal { x, objective } => Some((objective, x[..m].to_vec())),
    }
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

struct Node {
    bound: f64,
    seq: u64,
    fixed: Vec<Option<bool>>,
    frac: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for best-bound-first, then FIFO
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    eta: f64,
    bits: Vec<bool>,
}

fn consider(incumbent: &mut Option<Incumbent>, eta: f64, bits: Vec<bool>) {
    match incumbent {
        None => *incumbent = Some(Incumbent { eta, bits }),
        Some(inc) => {
            if eta < inc.eta {
                inc.eta = eta;
                inc.bits = bits;
            }
        }
    }
}

fn candidate_value(cuts: &[LinearCut], bits: &[bool], eta_floor: f64) -> Option<f64> {
    let mut eta = eta_floor;
    for cut in cuts {
        let v = cut.eval_bits(bits);
        match cut.kind {
            CutKind::Feasibility => {
                if v > TOL {
                    return None;
                }
            }
            CutKind::Optimality => eta = eta.max(v),
        }
    }
    Some(eta)
}

/// Exact minimizer of max-over-optimality-cuts subject to the feasibility
/// cuts, over b in {0,1}^M. `eta_floor` bounds eta from below when the pool
/// holds no optimality cut yet.
pub fn solve_master(cuts: &[LinearCut], m: usize, eta_floor: f64) -> MasterSolution {
    assert!(m >= 1);
    let infeasible = MasterSolution {
        pins: PinVector::all_off(m),
        eta: f64::INFINITY,
        status: MasterStatus::Infeasible,
    };

    let root_fixed = vec![None; m];
    let Some((bound, frac)) = lp_relax(cuts, m, eta_floor, &root_fixed) else {
        return infeasible;
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node { bound, seq, fixed: root_fixed, frac });
    let mut incumbent: Option<Incumbent> = None;

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.eta - TOL {
                break; // best-bound order: everything else is fathomed
            }
        }

        // rounding heuristic on the relaxed point, for early fathoming
        let rounded: Vec<bool> = node.frac.iter().map(|&x| x >= 0.5).collect();
        if let Some(eta) = candidate_value(cuts, &rounded, eta_floor) {
            consider(&mut incumbent, eta, rounded);
        }

        let frac_idx = node
            .frac
            .iter()
            .enumerate()
            .filter(|(j, &x)| node.fixed[*j].is_none() && x > INT_TOL && x < 1.0 - INT_TOL)
            .min_by(|(ja, &xa), (jb, &xb)| {
                let da = (xa - 0.5).abs();
                let db = (xb - 0.5).abs();
                da.total_cmp(&db).then_with(|| ja.cmp(jb))
            })
            .map(|(j, _)| j);

        let Some(branch_on) = frac_idx else {
            // integral relaxation: exact binary candidate, nothing to branch
            let bits: Vec<bool> = node
                .fixed
                .iter()
                .zip(&node.frac)
                .map(|(fx, &x)| fx.unwrap_or(x >= 0.5))
                .collect();
            if let Some(eta) = candidate_value(cuts, &bits, eta_floor) {
                consider(&mut incumbent, eta, bits);
            }
            continue;
        };

        for value in [false, true] {
            let mut fixed = node.fixed.clone();
            fixed[branch_on] = Some(value);
            if let Some((bound, frac)) = lp_relax(cuts, m, eta_floor, &fixed) {
                let prune = incumbent
                    .as_ref()
                    .map(|inc| bound >= inc.eta - TOL)
                    .unwrap_or(false);
                if !prune {
                    seq += 1;
                    heap.push(Node { bound, seq, fixed, frac });
                }
            }
        }
    }

    let Some(inc) = incumbent else {
        return infeasible;
    };

    // Second pass: the optimal value is known; a depth-first scan in index
    // order with the 0-branch first returns the lexicographically smallest
    // binary point whose value ties the optimum.
    let bits = lex_smallest_within(cuts, m, eta_floor, inc.eta + TOL).unwrap_or(inc.bits);
    let eta = candidate_value(cuts, &bits, eta_floor).expect("tie point must stay feasible");
    MasterSolution {
        pins: PinVector::from_bits(bits),
        eta,
        status: MasterStatus::Optimal,
    }
}

/// First binary point (in lexicographic order) whose exact master value is at
/// most `threshold`, found by DFS with LP-bound pruning.
fn lex_smallest_within(
    cuts: &[LinearCut],
    m: usize,
    eta_floor: f64,
    threshold: f64,
) -> Option<Vec<bool>> {
    fn descend(
        cuts: &[LinearCut],
        m: usize,
        eta_floor: f64,
        threshold: f64,
        fixed: &mut Vec<Option<bool>>,
        depth: usize,
    ) -> Option<Vec<bool>> {
        if depth == m {
            let bits: Vec<bool> = fixed.iter().map(|f| f.unwrap()).collect();
            return match candidate_value(cuts, &bits, eta_floor) {
                Some(eta) if eta <= threshold => Some(bits),
                _ => None,
            };
        }
        for value in [false, true] {
            fixed[depth] = Some(value);
            let keep = match lp_relax(cuts, m, eta_floor, fixed) {
                Some((bound, _)) => bound <= threshold,
                None => false,
            };
            if keep {
                if let Some(bits) = descend(cuts, m, eta_floor, threshold, fixed, depth + 1) {
                    return Some(bits);
                }
            }
        }
        fixed[depth] = None;
        None
    }

    let mut fixed = vec![None; m];
    descend(cuts, m, eta_floor, threshold, &mut fixed, 0)
}
