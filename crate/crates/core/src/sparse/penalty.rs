//! Group penalties on the rows of a basis matrix `C`, and their proximal maps.
//!
//! Every row of `C` multiplies one coordinate of the sufficient statistic, so
//! a group is a set of whole rows. Interaction groups of different binary
//! variables share the row of their common pair, and the norm is the plain
//! overlapping sum `Σ_g w_g ‖C_g‖`. Its prox is computed through the dual
//! (one ball constraint per group) by block coordinate descent.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matops::{lower_pairs, vech_pairs};

/// Which predictor a row of `C` acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowRole {
    Continuous(usize),
    /// Linear term of binary variable `j`.
    Main(usize),
    /// Interaction `H_i H_j`, `i > j`.
    Pair(usize, usize),
}

/// Rows of `t(x, h) = (x, h, pairs)`.
pub fn stacked_roles(p: usize, q: usize) -> Vec<RowRole> {
    let mut roles: Vec<RowRole> = (0..p).map(RowRole::Continuous).collect();
    roles.extend((0..q).map(RowRole::Main));
    roles.extend(lower_pairs(q).into_iter().map(|(i, j)| RowRole::Pair(i, j)));
    roles
}

/// Rows of `(x, h)`, the first block of the sub-optimal statistic.
pub fn linear_roles(p: usize, q: usize) -> Vec<RowRole> {
    let mut roles: Vec<RowRole> = (0..p).map(RowRole::Continuous).collect();
    roles.extend((0..q).map(RowRole::Main));
    roles
}

/// Rows of `vech(hhᵀ)`.
pub fn vech_roles(q: usize) -> Vec<RowRole> {
    vech_pairs(q)
        .into_iter()
        .map(|(i, j)| {
            if i == j {
                RowRole::Main(i)
            } else {
                RowRole::Pair(i, j)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// One group per row.
    ContinuousRows,
    /// Per binary variable: its main-effect rows and its interaction rows.
    BinaryOverlapping,
    /// Continuous rows weighted `γ`, binary groups weighted `1 − γ`.
    Mixed,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous-rows" | "rows" => Ok(Self::ContinuousRows),
            "binary-overlapping" | "overlapping" => Ok(Self::BinaryOverlapping),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::Invalid(format!("unknown penalty '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub rows: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub gamma: Option<f64>,
    pub roles: Vec<RowRole>,
    /// Groups with positive weight only; rows outside every group are free.
    pub groups: Vec<Group>,
    pub overlapping: bool,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, roles: Vec<RowRole>, gamma: Option<f64>) -> Result<Self> {
        let (wc, wb) = match (kind, gamma) {
            (PenaltyKind::Mixed, Some(g)) if (0.0..=1.0).contains(&g) => (g, 1.0 - g),
            (PenaltyKind::Mixed, _) => {
                return Err(Error::Invalid(
                    "the mixed penalty needs a weight in [0, 1]".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::Invalid(
                    "only the mixed penalty takes a weight".into(),
                ))
            }
            (PenaltyKind::ContinuousRows, None) => (1.0, 1.0),
            (PenaltyKind::BinaryOverlapping, None) => (1.0, 1.0),
        };
        let mut groups = Vec::new();
        if kind == PenaltyKind::ContinuousRows {
            for (row, role) in roles.iter().enumerate() {
                if matches!(role, RowRole::Pair(..)) {
                    return Err(Error::Invalid(
                        "the row penalty cannot act on interaction rows".into(),
                    ));
                }
                groups.push(Group {
                    rows: vec![row],
                    weight: 1.0,
                });
            }
        } else {
            if kind == PenaltyKind::BinaryOverlapping
                && roles.iter().any(|r| matches!(r, RowRole::Continuous(_)))
            {
                return Err(Error::Invalid(
                    "the overlapping penalty acts on binary rows only".into(),
                ));
            }
            let q = roles
                .iter()
                .filter_map(|r| match r {
                    RowRole::Main(j) => Some(j + 1),
                    RowRole::Pair(i, _) => Some(i + 1),
                    RowRole::Continuous(_) => None,
                })
                .max()
                .unwrap_or(0);
            let mut main = vec![Vec::new(); q];
            let mut inter = vec![Vec::new(); q];
            for (row, role) in roles.iter().enumerate() {
                match *role {
                    RowRole::Continuous(_) => groups.push(Group {
                        rows: vec![row],
                        weight: wc,
                    }),
                    RowRole::Main(j) => main[j].push(row),
                    RowRole::Pair(i, j) => {
                        inter[i].push(row);
                        inter[j].push(row);
                    }
                }
            }
            for rows in main.into_iter().chain(inter) {
                if !rows.is_empty() {
                    groups.push(Group { rows, weight: wb });
                }
            }
        }
        groups.retain(|g| g.weight > 0.0);
        let mut count = vec![0usize; roles.len()];
        for g in &groups {
            for &r in &g.rows {
                count[r] += 1;
            }
        }
        let overlapping = count.iter().any(|&c| c > 1);
        Ok(Self {
            kind,
            gamma,
            roles,
            groups,
            overlapping,
        })
    }

    pub fn continuous_rows(p: usize) -> Self {
        Self::new(PenaltyKind::ContinuousRows, linear_roles(p, 0), None).expect("valid row penalty")
    }

    pub fn binary_overlapping(q: usize) -> Self {
        Self::new(PenaltyKind::BinaryOverlapping, stacked_roles(0, q), None)
            .expect("valid overlapping penalty")
    }

    pub fn mixed(p: usize, q: usize, gamma: f64) -> Result<Self> {
        Self::new(PenaltyKind::Mixed, stacked_roles(p, q), Some(gamma))
    }

    pub fn rows(&self) -> usize {
        self.roles.len()
    }

    /// Rows belonging to at least one group.
    pub fn penalized_rows(&self) -> Vec<bool> {
        let mut out = vec![false; self.rows()];
        for g in &self.groups {
            for &r in &g.rows {
                out[r] = true;
            }
        }
        out
    }

    /// `Ω(C)`.
    pub fn value(&self, c: &DMatrix<f64>) -> f64 {
        self.groups
            .iter()
            .map(|g| g.weight * group_norm(c, &g.rows))
            .sum()
    }

    fn check(&self, c: &DMatrix<f64>) -> Result<()> {
        if c.nrows() != self.rows() {
            return Err(Error::Dimension(format!(
                "matrix has {} rows, penalty expects {}",
                c.nrows(),
                self.rows()
            )));
        }
        Ok(())
    }

    /// `argmin_X ½‖X − V‖² + t Ω(X)`. Dual iterates in `ws` warm-start the next call.
    pub fn prox(&self, v: &DMatrix<f64>, t: f64, ws: &mut ProxWorkspace) -> DMatrix<f64> {
        let d = v.ncols();
        if !self.overlapping {
            let mut x = v.clone();
            for g in &self.groups {
                let norm = group_norm(v, &g.rows);
                let rad = t * g.weight;
                let scale = if norm <= rad * (1.0 + INTERIOR_SLACK) {
                    0.0
                } else {
                    1.0 - rad / norm
                };
                for &r in &g.rows {
                    for k in 0..d {
                        x[(r, k)] *= scale;
                    }
                }
            }
            return x;
        }
        ws.ensure(self, d);
        let mut resid = v.clone();
        for (g, y) in self.groups.iter().zip(ws.duals.iter_mut()) {
            let rad = t * g.weight;
            let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > rad {
                let s = if norm > 0.0 { rad / norm } else { 0.0 };
                y.iter_mut().for_each(|a| *a *= s);
            }
            for (idx, &r) in g.rows.iter().enumerate() {
                for k in 0..d {
                    resid[(r, k)] -= y[idx * d + k];
                }
            }
        }
        let scale = v.amax().max(f64::MIN_POSITIVE);
        let mut interior = vec![false; self.groups.len()];
        let mut a = Vec::new();
        for _ in 0..MAX_DUAL_PASSES {
            let mut change = 0.0f64;
            for (gi, (g, y)) in self.groups.iter().zip(ws.duals.iter_mut()).enumerate() {
                let rad = t * g.weight;
                a.clear();
                for (idx, &r) in g.rows.iter().enumerate() {
                    for k in 0..d {
                        a.push(resid[(r, k)] + y[idx * d + k]);
                    }
                }
                let norm = a.iter().map(|z| z * z).sum::<f64>().sqrt();
                interior[gi] = norm <= rad * (1.0 + INTERIOR_SLACK);
                let s = if norm <= rad { 1.0 } else { rad / norm };
                for (idx, &r) in g.rows.iter().enumerate() {
                    for k in 0..d {
                        let e = idx * d + k;
                        let new = a[e] * s;
                        change = change.max((new - y[e]).abs());
                        y[e] = new;
                        resid[(r, k)] = a[e] - new;
                    }
                }
            }
            if change <= DUAL_TOL * scale {
                break;
            }
        }
        for (g, &inside) in self.groups.iter().zip(&interior) {
            if inside {
                for &r in &g.rows {
                    for k in 0..d {
                        resid[(r, k)] = 0.0;
                    }
                }
            }
        }
        resid
    }

    /// Dual norm of `G` over the penalized rows: the smallest `λ` with
    /// `0 ∈ G + λ∂Ω(0)` on those rows.
    pub fn dual_norm(&self, g: &DMatrix<f64>) -> Result<f64> {
        self.check(g)?;
        if self.groups.is_empty() {
            return Ok(0.0);
        }
        if !self.overlapping {
            return Ok(self
                .groups
                .iter()
                .map(|grp| group_norm(g, &grp.rows) / grp.weight)
                .fold(0.0, f64::max));
        }
        let pen = self.penalized_rows();
        let mut target = g.clone();
        for (r, &on) in pen.iter().enumerate() {
            if !on {
                target.row_mut(r).fill(0.0);
            }
        }
        let total = target.norm();
        if total == 0.0 {
            return Ok(0.0);
        }
        // every row charged to its first group bounds the dual norm from above
        let mut owner = vec![usize::MAX; self.rows()];
        for (gi, grp) in self.groups.iter().enumerate() {
            for &r in &grp.rows {
                if owner[r] == usize::MAX {
                    owner[r] = gi;
                }
            }
        }
        let mut hi = 0.0f64;
        for (gi, grp) in self.groups.iter().enumerate() {
            let own: Vec<usize> = grp
                .rows
                .iter()
                .cloned()
                .filter(|&r| owner[r] == gi)
                .collect();
            hi = hi.max(group_norm(&target, &own) / grp.weight);
        }
        let mut lo = 0.0f64;
        let mut ws = ProxWorkspace::default();
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let x = self.prox(&target, mid, &mut ws);
            if x.norm() == 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

const MAX_DUAL_PASSES: usize = 20_000;
const DUAL_TOL: f64 = 1e-15;
/// Groups whose prox input lies within this relative margin of the ball are set to zero.
const INTERIOR_SLACK: f64 = 1e-9;

fn group_norm(c: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let mut s = 0.0;
    for &r in rows {
        for k in 0..c.ncols() {
            s += c[(r, k)] * c[(r, k)];
        }
    }
    s.sqrt()
}

/// Dual variables of the overlapping prox, one vector per group.
#[derive(Debug, Clone, Default)]
pub struct ProxWorkspace {
    duals: Vec<Vec<f64>>,
    cols: usize,
}

impl ProxWorkspace {
    fn ensure(&mut self, pen: &PenaltySpec, d: usize) {
        let fits = self.cols == d
            && self.duals.len() == pen.groups.len()
            && self
                .duals
                .iter()
                .zip(&pen.groups)
                .all(|(y, g)| y.len() == g.rows.len() * d);
        if !fits {
            self.duals = pen
                .groups
                .iter()
                .map(|g| vec![0.0; g.rows.len() * d])
                .collect();
            self.cols = d;
        }
    }
}
