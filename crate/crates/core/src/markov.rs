//! Induced-chain analysis: classification, stationary distribution, jump
//! statistics, the group inverse of `I - P` and Δ-approximation bounds.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dtmc;
use crate::numerics::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    ErgodicUnichain,
    UnichainPeriodic,
    Multichain,
}

impl Classification {
    pub fn is_unichain(self) -> bool {
        !matches!(self, Self::Multichain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryAnalysis {
    pub p_inf: Vector,
    /// `inbound[s] = Σ_{s'≠s} P(s', s) p∞(s')`.
    pub inbound: Vector,
    pub p_jump: f64,
    pub classification: Classification,
}

fn closed_classes(p: &Mat) -> Vec<Vec<usize>> {
    let n = p.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut comp = vec![0; n];
    let sccs = tarjan_scc(&g);
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            comp[v.index()] = c;
        }
    }
    sccs.into_iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|v| (0..n).all(|j| p[(v.index(), j)] <= 0.0 || comp[j] == *c))
        })
        .map(|(_, members)| {
            let mut m: Vec<usize> = members.iter().map(|v| v.index()).collect();
            m.sort_unstable();
            m
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected class: gcd of `level(u) + 1 - level(v)` over its edges.
fn period(p: &Mat, class: &[usize]) -> usize {
    let n = p.nrows();
    let mut inside = vec![false; n];
    for &v in class {
        inside[v] = true;
    }
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([class[0]]);
    level[class[0]] = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if inside[v] && p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for &u in class {
        for &v in class {
            if p[(u, v)] > 0.0 {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g.max(1)
}

pub fn classify_chain(chain: &Dtmc) -> Classification {
    let closed = closed_classes(&chain.p);
    match closed.as_slice() {
        [class] if period(&chain.p, class) == 1 => Classification::ErgodicUnichain,
        [_] => Classification::UnichainPeriodic,
        _ => Classification::Multichain,
    }
}

/// Jump statistics of `p` under the distribution `p_inf`.
pub fn jump_statistics(p: &Mat, p_inf: &Vector) -> (Vector, f64) {
    let n = p.nrows();
    let inbound = Vector::from_fn(n, |s, _| (0..n).filter(|&t| t != s).map(|t| p[(t, s)] * p_inf[t]).sum());
    let p_jump = 1.0 - (0..n).map(|s| p_inf[s] * p[(s, s)]).sum::<f64>();
    (inbound, p_jump)
}

/// Solves `p(P - I) = 0, p1 = 1` by least squares on the stacked system.
fn solve_stationary(p: &Mat) -> Result<Vector> {
    let n = p.nrows();
    let mut a = Mat::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n)).copy_from(&(p.transpose() - Mat::identity(n, n)));
    a.row_mut(n).fill(1.0);
    let mut b = Vector::zeros(n + 1);
    b[n] = 1.0;
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let x = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::SolverFailure("singular stationary system".into()))?;
    let mut x = x.map(|v| v.max(0.0));
    let total = x.sum();
    if !(total > 0.0) {
        return Err(Error::SolverFailure("stationary solve produced no mass".into()));
    }
    x /= total;
    Ok(x)
}

pub fn stationary_distribution(chain: &Dtmc) -> Result<StationaryAnalysis> {
    let classification = classify_chain(chain);
    if !classification.is_unichain() {
        return Err(Error::NonUnichain { closed_classes: closed_classes(&chain.p).len() });
    }
    let p_inf = solve_stationary(&chain.p)?;
    let (inbound, p_jump) = jump_statistics(&chain.p, &p_inf);
    Ok(StationaryAnalysis { p_inf, inbound, p_jump, classification })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupInverseMethod {
    /// Partitioned formula with `last_state` moved to the trailing position.
    Partition { last_state: usize },
    /// `(H + 1p∞')⁻¹ - 1p∞'`, used when no partition is well conditioned.
    Fundamental,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupInverse {
    pub h_sharp: Mat,
    /// `max_j |h#_ij|` per row `i`.
    pub row_abs_max: Vector,
    /// `max_k |h#_ki|` per column `i`; bounds `|p_i - p̄_i| / ‖F‖∞`.
    pub sensitivity: Vector,
    pub method: GroupInverseMethod,
}

const PIVOT_TOL: f64 = 1e-12;

fn inverse_checked(u: &Mat) -> Option<Mat> {
    let inv = u.clone().try_inverse()?;
    let cond = crate::numerics::inf_norm(u) * crate::numerics::inf_norm(&inv);
    (cond.is_finite() && cond < 1e12).then_some(inv)
}

/// Partitioned formula for `H` whose trailing state is already in place.
fn partition_formula(h: &Mat) -> Option<Mat> {
    let n = h.nrows();
    let m = n - 1;
    let u = h.view((0, 0), (m, m)).into_owned();
    let d = h.view((m, 0), (1, m)).into_owned();
    let ui = inverse_checked(&u)?;
    let one = Vector::from_element(m, 1.0);
    let hp = &d * &ui; // 1×m
    let delta = -(&hp * &ui * &one)[0];
    let beta = 1.0 - (&hp * &one)[0];
    if delta.abs() <= PIVOT_TOL || beta.abs() <= PIVOT_TOL {
        return None;
    }
    let g = &ui - Mat::identity(m, m) * (delta / beta);
    let ui1 = &ui * &one;
    let g1 = &g * &one;
    let top_left = &ui + (&ui1 * (&hp * &ui)) / delta - (&g1 * (&hp * &g)) / delta;
    let mut out = Mat::zeros(n, n);
    out.view_mut((0, 0), (m, m)).copy_from(&top_left);
    out.view_mut((0, m), (m, 1)).copy_from(&(-&g1 / beta));
    out.view_mut((m, 0), (1, m)).copy_from(&(&hp * &g / beta));
    out[(m, m)] = delta / (beta * beta);
    Some(out)
}

fn permuted(h: &Mat, last: usize) -> (Mat, Vec<usize>) {
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).filter(|&i| i != last).collect();
    order.push(last);
    (Mat::from_fn(n, n, |i, j| h[(order[i], order[j])]), order)
}

/// Group inverse via the fundamental-matrix identity.
pub fn group_inverse_fundamental(p: &Mat, p_inf: &Vector) -> Result<Mat> {
    let n = p.nrows();
    let one_p = Mat::from_fn(n, n, |_, j| p_inf[j]);
    let z = (Mat::identity(n, n) - p + &one_p)
        .try_inverse()
        .ok_or_else(|| Error::SolverFailure("I - P + 1p' is singular".into()))?;
    Ok(z - one_p)
}

pub fn group_inverse(chain: &Dtmc) -> Result<GroupInverse> {
    let analysis = stationary_distribution(chain)?;
    group_inverse_with(chain, &analysis)
}

pub fn group_inverse_with(chain: &Dtmc, analysis: &StationaryAnalysis) -> Result<GroupInverse> {
    let p = &chain.p;
    let n = p.nrows();
    let h = Mat::identity(n, n) - p;
    let (h_sharp, method) = if n == 1 {
        (Mat::zeros(1, 1), GroupInverseMethod::Partition { last_state: 0 })
    } else {
        // natural order first, then states by decreasing stationary mass
        let mut candidates: Vec<usize> = (0..n).collect();
        candidates.sort_by(|&a, &b| analysis.p_inf[b].total_cmp(&analysis.p_inf[a]));
        candidates.retain(|&k| k != n - 1);
        candidates.insert(0, n - 1);
        let found = candidates.into_iter().find_map(|last| {
            let (hp, order) = permuted(&h, last);
            let hs = partition_formula(&hp)?;
            let mut back = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    back[(order[i], order[j])] = hs[(i, j)];
                }
            }
            Some((back, last))
        });
        match found {
            Some((hs, last)) => (hs, GroupInverseMethod::Partition { last_state: last }),
            None => (group_inverse_fundamental(p, &analysis.p_inf)?, GroupInverseMethod::Fundamental),
        }
    };
    let row_abs_max = Vector::from_fn(n, |i, _| h_sharp.row(i).amax());
    let sensitivity = Vector::from_fn(n, |i, _| h_sharp.column(i).amax());
    Ok(GroupInverse { h_sharp, row_abs_max, sensitivity, method })
}

/// Residuals of `HXH = H`, `XHX = X`, `HX = XH` in max-abs norm.
pub fn defining_residuals(h: &Mat, x: &Mat) -> [f64; 3] {
    [(h * x * h - h).amax(), (x * h * x - x).amax(), (h * x - x * h).amax()]
}

/// Worst-case deviations of jump statistics when the true chain is a
/// Δ-approximation of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaBound {
    pub delta: f64,
    /// `NΔ·κ_i` bounding `|p_i - p̄_i|`.
    pub stationary_dev: Vector,
    /// Upper bound on `P_jump - P̄_jump`.
    pub pjump_excess: f64,
    /// Upper bound on `→p_i - →p̄_i`.
    pub inbound_excess: Vector,
}

pub fn delta_bounds(chain_estimate: &Dtmc, delta: f64) -> Result<DeltaBound> {
    let analysis = stationary_distribution(chain_estimate)?;
    let gi = group_inverse_with(chain_estimate, &analysis)?;
    delta_bounds_with(&chain_estimate.p, &analysis, &gi, delta)
}

pub fn delta_bounds_with(p: &Mat, analysis: &StationaryAnalysis, gi: &GroupInverse, delta: f64) -> Result<DeltaBound> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("Δ must lie in [0, 1], got {delta}")));
    }
    let n = p.nrows();
    let nf = n as f64;
    let stationary_dev = &gi.sensitivity * (nf * delta);
    let pbar = &analysis.p_inf;
    // p_i P_ii - p̄_i P̄_ii = p̄_i δ_i + P̄_ii ε_i + ε_i δ_i
    let pjump_excess = (0..n)
        .map(|i| pbar[i] * delta + p[(i, i)] * stationary_dev[i] + delta * stationary_dev[i])
        .sum();
    // P_ji p_j - P̄_ji p̄_j = P̄_ji ε_j + d_ji p̄_j + d_ji ε_j
    let inbound_excess = Vector::from_fn(n, |i, _| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| p[(j, i)] * stationary_dev[j] + delta * pbar[j] + delta * stationary_dev[j])
            .sum()
    });
    Ok(DeltaBound { delta, stationary_dev, pjump_excess, inbound_excess })
}
