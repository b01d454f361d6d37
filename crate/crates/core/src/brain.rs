//! CPG controllers and their grid-addressed genotype.
//!
//! Every active hinge carries one oscillator with state `(x, y)`:
//!
//! ```text
//! dx_i/dt =  w_i * y_i + sum_j c_ij * x_j
//! dy_i/dt = -w_i * x_i
//! out_i   =  tanh(x_i)
//! ```
//!
//! where the couplings `c_ij = -c_ji` connect hinges at most two edges apart
//! in the body tree. All weights live in a fixed 440 x 14 matrix: one row
//! per 2D grid cell a hinge can occupy (21 x 21 minus the core's cell), one
//! column for the internal weight, twelve for the radius-2 Manhattan
//! neighbours and one for a hinge stacked on the same cell.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{BodyPhenotype, ModuleId, GRID_LIMIT};

pub const GENE_ROWS: usize = 440;
pub const GENE_COLS: usize = 14;
pub const GENE_LEN: usize = GENE_ROWS * GENE_COLS;
pub const INTERNAL_COLUMN: usize = 0;
pub const STACKED_COLUMN: usize = 13;
pub const BRAIN_SCHEMA: &str = "morphevo.brain.v1";

const GRID_SIDE: i32 = 2 * GRID_LIMIT + 1;
const CENTER_RAW: usize = (GRID_LIMIT * GRID_SIDE + GRID_LIMIT) as usize;

/// Offsets of the radius-2 Manhattan neighbourhood without its centre,
/// sorted by `dx` then `dy`. Offset `k` is stored in column `k + 1`.
pub const NEIGHBOUR_OFFSETS: [(i32, i32); 12] = [
    (-2, 0),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -2),
    (0, -1),
    (0, 1),
    (0, 2),
    (1, -1),
    (1, 0),
    (1, 1),
    (2, 0),
];

/// Initial oscillator state; gives a unit-amplitude sine for an uncoupled joint.
pub const INITIAL_STATE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Row of the gene matrix holding the weights of a hinge at `cell`.
pub fn joint_gene_row(cell: (i32, i32)) -> Result<usize> {
    let (x, y) = cell;
    if x.abs() > GRID_LIMIT || y.abs() > GRID_LIMIT {
        return Err(Error::invalid(format!("cell {cell:?} is outside the 21x21 grid")));
    }
    if cell == (0, 0) {
        return Err(Error::invalid("the core cell (0,0) has no joint row"));
    }
    let raw = ((x + GRID_LIMIT) * GRID_SIDE + (y + GRID_LIMIT)) as usize;
    Ok(if raw < CENTER_RAW { raw } else { raw - 1 })
}

/// Column holding the coupling towards a neighbour at `offset`, or the
/// internal weight for `(0, 0)` (the stacked slot when `stacked`).
pub fn neighbour_column(offset: (i32, i32), stacked: bool) -> Result<usize> {
    if stacked {
        return if offset == (0, 0) {
            Ok(STACKED_COLUMN)
        } else {
            Err(Error::invalid("stacked joints share a cell, offset must be (0,0)"))
        };
    }
    if offset == (0, 0) {
        return Ok(INTERNAL_COLUMN);
    }
    NEIGHBOUR_OFFSETS
        .iter()
        .position(|&o| o == offset)
        .map(|k| k + 1)
        .ok_or_else(|| Error::invalid(format!("offset {offset:?} is outside the radius-2 neighbourhood")))
}

/// Dense 440 x 14 weight matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainGenotype {
    weights: Vec<f64>,
}

impl BrainGenotype {
    pub fn zeros() -> Self {
        BrainGenotype {
            weights: vec![0.0; GENE_LEN],
        }
    }

    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != GENE_LEN {
            return Err(Error::invalid(format!(
                "brain genotype needs {GENE_LEN} entries, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("brain genotype entries must be finite"));
        }
        Ok(BrainGenotype { weights })
    }

    /// Entries drawn uniformly from `[-range, range]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, range: f64) -> Self {
        BrainGenotype {
            weights: (0..GENE_LEN).map(|_| rng.random_range(-range..=range)).collect(),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * GENE_COLS + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.weights[row * GENE_COLS + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    /// Text checkpoint: a header line `morphevo.brain.v1 440 14` followed by
    /// 440 lines of 14 space-separated values. Values use the shortest
    /// representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(GENE_LEN * 20);
        writeln!(s, "{BRAIN_SCHEMA} {GENE_ROWS} {GENE_COLS}").unwrap();
        for row in self.weights.chunks(GENE_COLS) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(s, "{}", line.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let expected = format!("{BRAIN_SCHEMA} {GENE_ROWS} {GENE_COLS}");
        if header.trim() != expected {
            return Err(Error::invalid(format!("brain header {header:?}, expected {expected:?}")));
        }
        let mut weights = Vec::with_capacity(GENE_LEN);
        for (r, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let before = weights.len();
            for tok in line.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("row {r}: bad value {tok:?}: {e}")))?;
                weights.push(v);
            }
            if weights.len() - before != GENE_COLS {
                return Err(Error::invalid(format!("row {r} has {} values", weights.len() - before)));
            }
        }
        Self::from_vec(weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpgJoint {
    pub module: ModuleId,
    pub cell: (i32, i32),
    pub row: usize,
    pub weight: f64,
}

/// Antisymmetric coupling: `+weight * x_j` enters joint `i`'s equation and
/// `-weight * x_i` enters joint `j`'s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct CpgNetwork {
    joints: Vec<CpgJoint>,
    couplings: Vec<Coupling>,
    x: Vec<f64>,
    y: Vec<f64>,
    dx: Vec<f64>,
    out: Vec<f64>,
}

/// Oscillators couple when their hinges are at most this many edges apart.
pub const NEIGHBOUR_TREE_DISTANCE: usize = 2;

/// Genes a body reads: joint rows with their owned coupling columns.
struct GeneLayout {
    joints: Vec<(ModuleId, (i32, i32), usize)>,
    /// `(i, j, row, column)`; the coupling weight lives at `(row, column)`.
    couplings: Vec<(usize, usize, usize, usize)>,
}

fn gene_layout(body: &BodyPhenotype) -> GeneLayout {
    let joints: Vec<(ModuleId, (i32, i32), usize)> = body
        .joint_grid_2d()
        .iter()
        .map(|c| (c.module, c.cell, joint_gene_row(c.cell).expect("hinges never sit on the core cell")))
        .collect();

    let mut couplings = Vec::new();
    for a in 0..joints.len() {
        for b in a + 1..joints.len() {
            let d = body.tree_distance(joints[a].0, joints[b].0).expect("joints belong to the body");
            if d > NEIGHBOUR_TREE_DISTANCE {
                continue;
            }
            // The joint with the smaller row owns the weight; stacked joints
            // share a row and keep module order.
            let (i, j) = if joints[b].2 < joints[a].2 { (b, a) } else { (a, b) };
            let (ci, cj) = (joints[i].1, joints[j].1);
            let column = if ci == cj {
                STACKED_COLUMN
            } else {
                neighbour_column((cj.0 - ci.0, cj.1 - ci.1), false)
                    .expect("tree distance <= 2 implies grid distance <= 2")
            };
            couplings.push((i, j, joints[i].2, column));
        }
    }
    GeneLayout { joints, couplings }
}

pub fn build_cpg_network(body: &BodyPhenotype, genotype: &BrainGenotype) -> CpgNetwork {
    let layout = gene_layout(body);
    let joints = layout
        .joints
        .iter()
        .map(|&(module, cell, row)| CpgJoint {
            module,
            cell,
            row,
            weight: genotype.get(row, INTERNAL_COLUMN),
        })
        .collect();
    let couplings = layout
        .couplings
        .iter()
        .map(|&(i, j, row, column)| Coupling {
            i,
            j,
            weight: genotype.get(row, column),
        })
        .collect();
    CpgNetwork::new(joints, couplings)
}

/// Flat indices of the genotype entries that `body`'s network reads,
/// ascending and without duplicates.
pub fn used_genes(body: &BodyPhenotype) -> Vec<usize> {
    let layout = gene_layout(body);
    let mut genes: Vec<usize> = layout
        .joints
        .iter()
        .map(|&(_, _, row)| row * GENE_COLS + INTERNAL_COLUMN)
        .chain(layout.couplings.iter().map(|&(_, _, row, column)| row * GENE_COLS + column))
        .collect();
    genes.sort_unstable();
    genes.dedup();
    genes
}

impl CpgNetwork {
    pub fn new(joints: Vec<CpgJoint>, couplings: Vec<Coupling>) -> Self {
        let n = joints.len();
        let mut net = CpgNetwork {
            joints,
            couplings,
            x: vec![INITIAL_STATE; n],
            y: vec![INITIAL_STATE; n],
            dx: vec![0.0; n],
            out: vec![0.0; n],
        };
        net.refresh_outputs();
        net
    }

    /// A single uncoupled oscillator with internal weight `w`.
    pub fn single(w: f64) -> Self {
        Self::new(
            vec![CpgJoint {
                module: ModuleId(1),
                cell: (0, 1),
                row: joint_gene_row((0, 1)).expect("valid cell"),
                weight: w,
            }],
            Vec::new(),
        )
    }

    pub fn joints(&self) -> &[CpgJoint] {
        &self.joints
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn state(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn outputs(&self) -> &[f64] {
        &self.out
    }

    pub fn reset(&mut self) {
        self.x.fill(INITIAL_STATE);
        self.y.fill(INITIAL_STATE);
        self.refresh_outputs();
    }

    /// Coefficient of `x_j` in the equation for `dx_i/dt`.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        self.couplings
            .iter()
            .map(|c| {
                if (c.i, c.j) == (i, j) {
                    c.weight
                } else if (c.i, c.j) == (j, i) {
                    -c.weight
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// One integration step; returns `tanh(x_i)` per joint.
    pub fn step(&mut self, dt: f64) -> Result<&[f64]> {
        self.advance(dt, 1)
    }

    /// `steps` semi-implicit Euler steps of size `dt`: all `x` are advanced
    /// from the pre-step state, then each `y` from its new `x`.
    pub fn advance(&mut self, dt: f64, steps: usize) -> Result<&[f64]> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(Error::invalid(format!("cpg step {dt} outside (0, 0.01]")));
        }
        for _ in 0..steps {
            for (k, joint) in self.joints.iter().enumerate() {
                self.dx[k] = joint.weight * self.y[k];
            }
            for c in &self.couplings {
                self.dx[c.i] += c.weight * self.x[c.j];
                self.dx[c.j] -= c.weight * self.x[c.i];
            }
            for (k, joint) in self.joints.iter().enumerate() {
                self.x[k] += dt * self.dx[k];
                self.y[k] -= dt * joint.weight * self.x[k];
            }
        }
        if let Some(k) = (0..self.x.len()).find(|&k| !(self.x[k].is_finite() && self.y[k].is_finite())) {
            return Err(Error::Numeric(format!("cpg state of joint {k} is not finite")));
        }
        self.refresh_outputs();
        Ok(&self.out)
    }

    fn refresh_outputs(&mut self) {
        for (o, x) in self.out.iter_mut().zip(&self.x) {
            *o = x.tanh();
        }
    }
}

pub fn uniform_crossover_brain<R: Rng + ?Sized>(a: &BrainGenotype, b: &BrainGenotype, rng: &mut R) -> BrainGenotype {
    BrainGenotype {
        weights: a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(&wa, &wb)| if rng.random_bool(0.5) { wa } else { wb })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BrainMutationParams {
    /// Per-entry probability of adding Gaussian noise.
    pub probability: f64,
    pub sigma: f64,
}

impl Default for BrainMutationParams {
    fn default() -> Self {
        BrainMutationParams {
            probability: 0.8,
            sigma: 0.5,
        }
    }
}

pub fn gaussian_mutate_brain<R: Rng + ?Sized>(
    g: &BrainGenotype,
    rng: &mut R,
    params: &BrainMutationParams,
) -> BrainGenotype {
    let noise = Normal::new(0.0, params.sigma).expect("sigma must be finite and non-negative");
    BrainGenotype {
        weights: g
            .weights
            .iter()
            .map(|&w| {
                if rng.random_bool(params.probability) {
                    w + noise.sample(rng)
                } else {
                    w
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::fixtures::plus_body;
    use crate::morphology::{ModuleKind, Rotation, Socket};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn gene_rows() {
        assert_eq!(joint_gene_row((-10, -10)).unwrap(), 0);
        assert_eq!(joint_gene_row((0, 1)).unwrap(), 220);
        assert_eq!(joint_gene_row((0, -1)).unwrap(), 219);
        assert_eq!(joint_gene_row((10, 10)).unwrap(), 439);
        assert!(joint_gene_row((0, 0)).is_err());
        assert!(joint_gene_row((11, 0)).is_err());
        assert!(joint_gene_row((0, -11)).is_err());
    }

    #[test]
    fn neighbour_columns() {
        assert_eq!(neighbour_column((0, 0), false).unwrap(), 0);
        assert_eq!(neighbour_column((0, 0), true).unwrap(), 13);
        assert!(neighbour_column((1, 0), true).is_err());
        assert!(neighbour_column((2, 1), false).is_err());
        assert!(neighbour_column((0, 3), false).is_err());
        for (k, &o) in NEIGHBOUR_OFFSETS.iter().enumerate() {
            assert_eq!(neighbour_column(o, false).unwrap(), k + 1);
        }
    }

    #[test]
    fn plus_shape_network() {
        let mut g = BrainGenotype::zeros();
        let rows: Vec<usize> = [(0, 1), (0, -1), (-1, 0), (1, 0)]
            .into_iter()
            .map(|c| joint_gene_row(c).unwrap())
            .collect();
        for (k, &r) in rows.iter().enumerate() {
            g.set(r, 0, 1.0 + k as f64);
        }
        // (-1,0) owns the coupling towards (1,0): offset (2,0) is column 12.
        g.set(joint_gene_row((-1, 0)).unwrap(), 12, 0.25);
        let net = build_cpg_network(&plus_body(), &g);
        assert_eq!(net.len(), 4);
        assert_eq!(net.couplings().len(), 6);
        let weights: Vec<f64> = net.joints().iter().map(|j| j.weight).collect();
        assert_eq!(weights, vec![1.0, 2.0, 3.0, 4.0]);
        let left = net.joints().iter().position(|j| j.cell == (-1, 0)).unwrap();
        let right = net.joints().iter().position(|j| j.cell == (1, 0)).unwrap();
        assert_eq!(net.coefficient(left, right), 0.25);
        assert_eq!(net.coefficient(right, left), -0.25);
        for c in net.couplings() {
            assert!(net.joints()[c.i].row <= net.joints()[c.j].row);
        }
    }

    #[test]
    fn distant_hinges_are_not_coupled() {
        // front chain: core -> hinge (0,1) -> hinge (0,2) -> hinge (0,3)
        let mut b = BodyPhenotype::builder();
        let h1 = b.attach(ModuleId(0), Socket::Front, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let h2 = b.attach(h1, Socket::Front, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let h3 = b.attach(h2, Socket::Front, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        b.attach(ModuleId(0), Socket::Back, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let _ = h3;
        let net = build_cpg_network(&b.build(), &BrainGenotype::zeros());
        // pairs within distance 2: (1,2) (1,3) (2,3) (1,back)
        assert_eq!(net.couplings().len(), 4);
    }

    #[test]
    fn stacked_hinges_use_stacked_slot() {
        let mut b = BodyPhenotype::builder();
        let brick = b.attach(ModuleId(0), Socket::Right, ModuleKind::Brick, Rotation::Deg90).unwrap();
        b.attach(brick, Socket::Left, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        b.attach(brick, Socket::Right, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let body = b.build();
        let mut g = BrainGenotype::zeros();
        let row = joint_gene_row((1, 0)).unwrap();
        g.set(row, STACKED_COLUMN, -0.7);
        g.set(row, INTERNAL_COLUMN, 2.0);
        let net = build_cpg_network(&body, &g);
        assert_eq!(net.couplings(), &[Coupling { i: 0, j: 1, weight: -0.7 }]);
        assert!(net.joints().iter().all(|j| j.weight == 2.0));
    }

    fn network_weights(net: &CpgNetwork) -> Vec<f64> {
        net.joints().iter().map(|j| j.weight).chain(net.couplings().iter().map(|c| c.weight)).collect()
    }

    #[test]
    fn used_genes_are_exactly_the_read_genes() {
        let mut b = BodyPhenotype::builder();
        let brick = b.attach(ModuleId(0), Socket::Right, ModuleKind::Brick, Rotation::Deg90).unwrap();
        b.attach(brick, Socket::Left, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        b.attach(brick, Socket::Right, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        b.attach(ModuleId(0), Socket::Front, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        for body in [plus_body(), b.build(), BodyPhenotype::core_only()] {
            let used = used_genes(&body);
            assert!(used.windows(2).all(|w| w[0] < w[1]));
            let base = BrainGenotype::zeros();
            let reference = network_weights(&build_cpg_network(&body, &base));
            for gene in 0..GENE_ROWS * GENE_COLS {
                let mut g = base.clone();
                g.set(gene / GENE_COLS, gene % GENE_COLS, 1.0);
                let changed = network_weights(&build_cpg_network(&body, &g)) != reference;
                assert_eq!(changed, used.binary_search(&gene).is_ok(), "gene {gene}");
            }
        }
        assert_eq!(used_genes(&plus_body()).len(), 4 + 6);
    }

    #[test]
    fn bare_core_network_is_empty() {
        let mut net = build_cpg_network(&BodyPhenotype::core_only(), &BrainGenotype::random(&mut ChaCha8Rng::seed_from_u64(0), 1.0));
        assert!(net.is_empty());
        assert!(net.step(0.001).unwrap().is_empty());
    }

    #[test]
    fn zero_genotype_is_static() {
        let mut net = build_cpg_network(&plus_body(), &BrainGenotype::zeros());
        let expected = INITIAL_STATE.tanh();
        assert!((expected - 0.6089).abs() < 1e-4);
        for _ in 0..100 {
            let out = net.step(0.01).unwrap();
            assert!(out.iter().all(|&o| o == expected));
        }
        assert!(net.state().0.iter().chain(net.state().1).all(|&v| v == INITIAL_STATE));
    }

    #[test]
    fn single_oscillator_tracks_sine() {
        let mut net = CpgNetwork::single(1.0);
        let steps = (PI / 4.0 / 0.001).round() as usize;
        net.advance(0.001, steps).unwrap();
        let t = steps as f64 * 0.001;
        let x = net.state().0[0];
        assert!((x - (t + PI / 4.0).sin()).abs() < 2e-3);
        assert!((x - 1.0).abs() < 2e-3);
    }

    #[test]
    fn step_validates_dt() {
        let mut net = CpgNetwork::single(1.0);
        assert!(net.step(0.0).is_err());
        assert!(net.step(0.02).is_err());
        assert!(net.step(f64::NAN).is_err());
    }

    #[test]
    fn reset_restores_initial_state() {
        let mut net = CpgNetwork::single(3.0);
        net.advance(0.001, 500).unwrap();
        net.reset();
        assert_eq!(net.state().0, &[INITIAL_STATE]);
        assert_eq!(net.outputs(), &[INITIAL_STATE.tanh()]);
    }

    #[test]
    fn crossover_copies_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = BrainGenotype::random(&mut rng, 1.0);
        let b = BrainGenotype::random(&mut rng, 1.0);
        let c = uniform_crossover_brain(&a, &b, &mut rng);
        for k in 0..GENE_LEN {
            let v = c.as_slice()[k];
            assert!(v == a.as_slice()[k] || v == b.as_slice()[k]);
        }
        assert_eq!(uniform_crossover_brain(&a, &a, &mut rng), a);

        let zeros = BrainGenotype::zeros();
        let ones = BrainGenotype::from_vec(vec![1.0; GENE_LEN]).unwrap();
        let mix = uniform_crossover_brain(&zeros, &ones, &mut rng);
        let mean = mix.as_slice().iter().sum::<f64>() / GENE_LEN as f64;
        assert!((0.47..=0.53).contains(&mean), "mean {mean}");
    }

    #[test]
    fn mutation_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = BrainGenotype::random(&mut rng, 1.0);
        let off = BrainMutationParams { probability: 0.0, ..Default::default() };
        assert_eq!(gaussian_mutate_brain(&g, &mut rng, &off), g);

        let mut total_abs = 0.0;
        let mut changed_total = 0usize;
        for _ in 0..20 {
            let m = gaussian_mutate_brain(&g, &mut rng, &BrainMutationParams::default());
            let deltas: Vec<f64> = m.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
            let frac = deltas.len() as f64 / GENE_LEN as f64;
            assert!((0.77..=0.83).contains(&frac), "changed fraction {frac}");
            changed_total += deltas.len();
            total_abs += deltas.iter().map(|d| d.abs()).sum::<f64>();
        }
        let mean_abs = total_abs / changed_total as f64;
        let expected = 0.5 * (2.0 / PI).sqrt();
        assert!((mean_abs - expected).abs() < 0.02, "mean |delta| {mean_abs}");
    }

    #[test]
    fn text_round_trip() {
        let g = BrainGenotype::random(&mut ChaCha8Rng::seed_from_u64(2), 3.0);
        let text = g.to_text();
        assert!(text.starts_with("morphevo.brain.v1 440 14\n"));
        let back = BrainGenotype::from_text(&text).unwrap();
        assert_eq!(back, g);
        assert!(BrainGenotype::from_text(&text.replace("440 14", "440 13")).is_err());
        let truncated: String = text.lines().take(100).collect::<Vec<_>>().join("\n");
        assert!(BrainGenotype::from_text(&truncated).is_err());
    }

    #[test]
    fn from_vec_validates() {
        assert!(BrainGenotype::from_vec(vec![0.0; 10]).is_err());
        let mut v = vec![0.0; GENE_LEN];
        v[5] = f64::NAN;
        assert!(BrainGenotype::from_vec(v).is_err());
    }
}
