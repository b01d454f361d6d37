//! Modular robot bodies and the CPPN body decoder.
//!
//! Bodies are trees rooted at a single core module. Every module sits on an
//! integer grid cell; the core is at the origin and faces `+y`, so a module
//! attached to the core's front socket lands on `(0, 1, 0)`.
//!
//! Growth is breadth-first. Each module offers its sockets in a fixed order
//! (core: front, back, left, right; brick: front, left, right; hinge: front),
//! the CPPN is queried at the candidate cell, and the highest type score wins.
//! Occupied cells end the branch and growth stops at [`MAX_MODULES`].

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cppn::{CompiledCppn, CppnGenome, NUM_INPUTS, NUM_OUTPUTS};
use crate::error::{Error, Result};

pub const MAX_MODULES: usize = 10;
/// Every grid coordinate lies in `[-GRID_LIMIT, GRID_LIMIT]`.
pub const GRID_LIMIT: i32 = 10;
pub const BODY_SCHEMA: &str = "morphevo.body.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Core,
    Brick,
    ActiveHinge,
}

impl ModuleKind {
    fn sockets(self) -> &'static [Socket] {
        match self {
            ModuleKind::Core => &[Socket::Front, Socket::Back, Socket::Left, Socket::Right],
            ModuleKind::Brick => &[Socket::Front, Socket::Left, Socket::Right],
            ModuleKind::ActiveHinge => &[Socket::Front],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    #[serde(rename = "0")]
    Deg0,
    #[serde(rename = "90")]
    Deg90,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Socket {
    Front,
    Back,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModuleId(pub usize);

type Vec3 = [i32; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn neg(a: Vec3) -> Vec3 {
    [-a[0], -a[1], -a[2]]
}

/// Orientation of a module: the direction it grows along and its up axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Frame {
    forward: Vec3,
    up: Vec3,
}

impl Frame {
    const CORE: Frame = Frame {
        forward: [0, 1, 0],
        up: [0, 0, 1],
    };

    fn right(self) -> Vec3 {
        cross(self.forward, self.up)
    }

    fn direction(self, socket: Socket) -> Vec3 {
        match socket {
            Socket::Front => self.forward,
            Socket::Back => neg(self.forward),
            Socket::Left => neg(self.right()),
            Socket::Right => self.right(),
        }
    }

    /// Frame of a child attached at `socket`. A 90° rotation turns the
    /// child about its attachment axis, which lifts its side sockets out of
    /// the parent's plane.
    fn child(self, socket: Socket, rotation: Rotation) -> Frame {
        let forward = self.direction(socket);
        let up = match rotation {
            Rotation::Deg0 => self.up,
            Rotation::Deg90 => cross(forward, self.up),
        };
        Frame { forward, up }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub kind: ModuleKind,
    pub rotation: Rotation,
    pub grid_pos: [i32; 3],
    pub parent: Option<ModuleId>,
    pub parent_socket: Option<Socket>,
    pub children: Vec<ModuleId>,
    /// Edge count from the core.
    pub depth: usize,
    frame: Frame,
}

/// A decoded body. Modules are stored in growth (breadth-first) order, so
/// index 0 is always the core.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPhenotype {
    modules: Vec<Module>,
}

/// A hinge projected onto the 2D brain grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointCell {
    pub module: ModuleId,
    pub cell: (i32, i32),
    /// Another hinge projects onto the same 2D cell.
    pub stacked: bool,
}

/// Anything that answers CPPN queries. Decoding only ever sees the outputs,
/// so tests can drive growth with hand-written evaluators.
pub trait BodyQuery {
    fn query(&self, q: [f64; NUM_INPUTS]) -> Result<[f64; NUM_OUTPUTS]>;
}

impl BodyQuery for CompiledCppn {
    fn query(&self, q: [f64; NUM_INPUTS]) -> Result<[f64; NUM_OUTPUTS]> {
        self.evaluate(q)
    }
}

impl<F> BodyQuery for F
where
    F: Fn([f64; NUM_INPUTS]) -> [f64; NUM_OUTPUTS],
{
    fn query(&self, q: [f64; NUM_INPUTS]) -> Result<[f64; NUM_OUTPUTS]> {
        Ok(self(q))
    }
}

/// Index of the largest score; NaN never wins and ties go to the lowest index.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in scores.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Cells above or below the core share its 2D cell, which has no joint
/// gene row; hinges are not placed there.
fn in_core_column(cell: Vec3) -> bool {
    cell[0] == 0 && cell[1] == 0
}

pub fn decode_body(genome: &CppnGenome) -> BodyPhenotype {
    decode_with(&genome.compile()).expect("decoder queries are always finite")
}

pub fn decode_with<Q: BodyQuery + ?Sized>(cppn: &Q) -> Result<BodyPhenotype> {
    let mut body = BodyPhenotype::core_only();
    let mut occupied: HashSet<Vec3> = HashSet::from([[0, 0, 0]]);
    let mut queue = VecDeque::from([ModuleId(0)]);

    'grow: while let Some(parent) = queue.pop_front() {
        let (kind, frame, pos, depth) = {
            let m = &body.modules[parent.0];
            (m.kind, m.frame, m.grid_pos, m.depth)
        };
        for &socket in kind.sockets() {
            if body.modules.len() >= MAX_MODULES {
                break 'grow;
            }
            let target = add(pos, frame.direction(socket));
            if occupied.contains(&target) || target.iter().any(|c| c.abs() > GRID_LIMIT) {
                continue;
            }
            let q = [target[0] as f64, target[1] as f64, target[2] as f64, (depth + 1) as f64];
            let out = cppn.query(q)?;
            let kind = match argmax(&out[0..3]) {
                0 => ModuleKind::Brick,
                1 if !in_core_column(target) => ModuleKind::ActiveHinge,
                _ => continue,
            };
            let rotation = if argmax(&out[3..5]) == 0 { Rotation::Deg0 } else { Rotation::Deg90 };
            occupied.insert(target);
            let id = body.attach(parent, socket, kind, rotation);
            queue.push_back(id);
        }
    }
    Ok(body)
}

impl BodyPhenotype {
    pub fn core_only() -> Self {
        BodyPhenotype {
            modules: vec![Module {
                kind: ModuleKind::Core,
                rotation: Rotation::Deg0,
                grid_pos: [0, 0, 0],
                parent: None,
                parent_socket: None,
                children: Vec::new(),
                depth: 0,
                frame: Frame::CORE,
            }],
        }
    }

    /// Attaches a new module without any collision or size checks.
    fn attach(&mut self, parent: ModuleId, socket: Socket, kind: ModuleKind, rotation: Rotation) -> ModuleId {
        let p = &self.modules[parent.0];
        let frame = p.frame.child(socket, rotation);
        let module = Module {
            kind,
            rotation,
            grid_pos: add(p.grid_pos, p.frame.direction(socket)),
            parent: Some(parent),
            parent_socket: Some(socket),
            children: Vec::new(),
            depth: p.depth + 1,
            frame,
        };
        let id = ModuleId(self.modules.len());
        self.modules.push(module);
        self.modules[parent.0].children.push(id);
        id
    }

    /// Builds a body by hand, checking every body invariant. Used for
    /// fixtures and when loading serialized bodies.
    pub fn builder() -> BodyBuilder {
        BodyBuilder {
            body: BodyPhenotype::core_only(),
        }
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    pub fn module(&self, id: ModuleId) -> Option<&Module> {
        self.modules.get(id.0)
    }

    pub fn len(&self) -> usize {
        self.modules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn hinges(&self) -> impl Iterator<Item = (ModuleId, &Module)> {
        self.modules
            .iter()
            .enumerate()
            .filter(|(_, m)| m.kind == ModuleKind::ActiveHinge)
            .map(|(i, m)| (ModuleId(i), m))
    }

    pub fn count(&self, kind: ModuleKind) -> usize {
        self.modules.iter().filter(|m| m.kind == kind).count()
    }

    /// Each hinge with its `(x, y)` grid cell (z dropped).
    pub fn joint_grid_2d(&self) -> Vec<JointCell> {
        let cells: Vec<(ModuleId, (i32, i32))> = self
            .hinges()
            .map(|(id, m)| (id, (m.grid_pos[0], m.grid_pos[1])))
            .collect();
        cells
            .iter()
            .map(|&(module, cell)| JointCell {
                module,
                cell,
                stacked: cells.iter().any(|&(other, c)| other != module && c == cell),
            })
            .collect()
    }

    /// Number of edges on the tree path between two modules.
    pub fn tree_distance(&self, a: ModuleId, b: ModuleId) -> Result<usize> {
        for id in [a, b] {
            if id.0 >= self.modules.len() {
                return Err(Error::invalid(format!("module {} is not part of this body", id.0)));
            }
        }
        let parent = |m: ModuleId| self.modules[m.0].parent.expect("only the core has no parent");
        let depth = |m: ModuleId| self.modules[m.0].depth;
        let (mut a, mut b) = (a, b);
        let mut distance = 0;
        while depth(a) > depth(b) {
            a = parent(a);
            distance += 1;
        }
        while depth(b) > depth(a) {
            b = parent(b);
            distance += 1;
        }
        while a != b {
            a = parent(a);
            b = parent(b);
            distance += 2;
        }
        Ok(distance)
    }

    pub fn to_json(&self) -> String {
        let doc = BodyDocument {
            schema: BODY_SCHEMA.to_string(),
            root: self.node(ModuleId(0)),
        };
        serde_json::to_string_pretty(&doc).expect("body serialization cannot fail")
    }

    fn node(&self, id: ModuleId) -> BodyNode {
        let m = &self.modules[id.0];
        BodyNode {
            kind: m.kind,
            rotation: m.rotation,
            position: m.grid_pos,
            socket: m.parent_socket,
            children: m.children.iter().map(|&c| self.node(c)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BodyDocument =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("body json: {e}")))?;
        if doc.schema != BODY_SCHEMA {
            return Err(Error::invalid(format!("unsupported body schema {:?}", doc.schema)));
        }
        if doc.root.kind != ModuleKind::Core || doc.root.position != [0, 0, 0] {
            return Err(Error::invalid("body root must be a core at the origin"));
        }
        // Rebuild breadth-first so module ids match the decoder's order.
        let mut builder = BodyPhenotype::builder();
        let mut queue = VecDeque::from([(ModuleId(0), &doc.root)]);
        while let Some((id, node)) = queue.pop_front() {
            for child in &node.children {
                let socket = child
                    .socket
                    .ok_or_else(|| Error::invalid("non-root module without a socket"))?;
                let cid = builder.attach(id, socket, child.kind, child.rotation)?;
                if builder.body.modules[cid.0].grid_pos != child.position {
                    return Err(Error::invalid(format!(
                        "module position {:?} does not match its socket chain",
                        child.position
                    )));
                }
                queue.push_back((cid, child));
            }
        }
        Ok(builder.build())
    }
}

#[derive(Debug, Clone)]
pub struct BodyBuilder {
    body: BodyPhenotype,
}

impl BodyBuilder {
    pub fn attach(&mut self, parent: ModuleId, socket: Socket, kind: ModuleKind, rotation: Rotation) -> Result<ModuleId> {
        let Some(p) = self.body.modules.get(parent.0) else {
            return Err(Error::invalid(format!("unknown parent module {}", parent.0)));
        };
        if kind == ModuleKind::Core {
            return Err(Error::invalid("a body has exactly one core"));
        }
        if !p.kind.sockets().contains(&socket) {
            return Err(Error::invalid(format!("{:?} has no {:?} socket", p.kind, socket)));
        }
        if p.children.iter().any(|c| self.body.modules[c.0].parent_socket == Some(socket)) {
            return Err(Error::invalid(format!("socket {socket:?} already used")));
        }
        if self.body.modules.len() >= MAX_MODULES {
            return Err(Error::invalid("body already has the maximum number of modules"));
        }
        let target = add(p.grid_pos, p.frame.direction(socket));
        if target.iter().any(|c| c.abs() > GRID_LIMIT) {
            return Err(Error::invalid(format!("cell {target:?} is outside the grid")));
        }
        if self.body.modules.iter().any(|m| m.grid_pos == target) {
            return Err(Error::invalid(format!("cell {target:?} is occupied")));
        }
        if kind == ModuleKind::ActiveHinge && in_core_column(target) {
            return Err(Error::invalid(format!("hinge at {target:?} would project onto the core cell")));
        }
        Ok(self.body.attach(parent, socket, kind, rotation))
    }

    pub fn build(self) -> BodyPhenotype {
        self.body
    }
}

#[derive(Serialize, Deserialize)]
struct BodyDocument {
    schema: String,
    root: BodyNode,
}

#[derive(Serialize, Deserialize)]
struct BodyNode {
    kind: ModuleKind,
    rotation: Rotation,
    position: [i32; 3],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    socket: Option<Socket>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    children: Vec<BodyNode>,
}


#[cfg(test)]
mod tests {
    use super::fixtures::plus_body;
    use super::*;
    use crate::cppn::{random_cppn, CppnInitParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(out: [f64; 5]) -> impl Fn([f64; 4]) -> [f64; 5] {
        move |_| out
    }

    #[test]
    fn empty_dominant_genome_gives_bare_core() {
        let body = decode_with(&constant([0.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(body.len(), 1);
        assert_eq!(body.modules()[0].kind, ModuleKind::Core);
    }

    #[test]
    fn hinge_dominant_genome_grows_ten_modules() {
        let body = decode_with(&constant([0.0, 1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(body.len(), 10);
        let positions: Vec<[i32; 3]> = body.modules().iter().map(|m| m.grid_pos).collect();
        // Core, its four neighbours, the four second-ring hinges, then the
        // front chain continues.
        assert_eq!(
            positions,
            vec![
                [0, 0, 0],
                [0, 1, 0],
                [0, -1, 0],
                [-1, 0, 0],
                [1, 0, 0],
                [0, 2, 0],
                [0, -2, 0],
                [-2, 0, 0],
                [2, 0, 0],
                [0, 3, 0],
            ]
        );
        assert!(body.modules()[1..].iter().all(|m| m.kind == ModuleKind::ActiveHinge));
    }

    #[test]
    fn front_of_core_is_plus_y() {
        let body = plus_body();
        let front = body
            .modules()
            .iter()
            .find(|m| m.parent_socket == Some(Socket::Front))
            .unwrap();
        assert_eq!(front.grid_pos, [0, 1, 0]);
    }

    #[test]
    fn ties_pick_lowest_index() {
        // Brick and joint tie: brick wins. Rotations tie: 0° wins.
        let body = decode_with(&constant([1.0, 1.0, 0.0, 0.5, 0.5])).unwrap();
        assert_eq!(body.modules()[1].kind, ModuleKind::Brick);
        assert_eq!(body.modules()[1].rotation, Rotation::Deg0);
    }

    #[test]
    fn rotated_bricks_grow_out_of_plane() {
        // Bricks with 90° rotation: side sockets of the front brick point along z.
        let body = decode_with(&constant([1.0, 0.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(body.modules().iter().any(|m| m.grid_pos[2] != 0));
    }

    #[test]
    fn occupied_cells_are_skipped() {
        // Bricks everywhere with no rotation: the lateral sockets of bricks
        // keep colliding inside the plane, yet the body stays collision free.
        let body = decode_with(&constant([1.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let mut seen = HashSet::new();
        for m in body.modules() {
            assert!(seen.insert(m.grid_pos));
        }
        assert_eq!(body.len(), MAX_MODULES);
    }

    #[test]
    fn hinges_never_enter_the_core_column() {
        // Rotated hinges everywhere: their side sockets point along z, so
        // the core's vertical neighbours are reachable.
        let body = decode_with(&constant([0.0, 1.0, 0.0, 0.0, 1.0])).unwrap();
        assert!(body.joint_grid_2d().iter().all(|j| j.cell != (0, 0)));

        // Builder: climb from the front brick to (0,1,1), then look for the
        // socket that points back over the core.
        let sockets = [Socket::Front, Socket::Back, Socket::Left, Socket::Right];
        let mut reached = false;
        for up in sockets {
            for over in sockets {
                for rotation in [Rotation::Deg0, Rotation::Deg90] {
                    let mut b = BodyPhenotype::builder();
                    let front = b.attach(ModuleId(0), Socket::Front, ModuleKind::Brick, Rotation::Deg90).unwrap();
                    let Ok(mid) = b.attach(front, up, ModuleKind::Brick, rotation) else { continue };
                    if b.clone().build().module(mid).unwrap().grid_pos != [0, 1, 1] {
                        continue;
                    }
                    let mut probe = b.clone();
                    let Ok(top) = probe.attach(mid, over, ModuleKind::Brick, Rotation::Deg0) else { continue };
                    if probe.build().module(top).unwrap().grid_pos == [0, 0, 1] {
                        reached = true;
                        assert!(b.attach(mid, over, ModuleKind::ActiveHinge, Rotation::Deg0).is_err());
                    }
                }
            }
        }
        assert!(reached, "the core column should be reachable by bricks");
    }

    #[test]
    fn joint_projection() {
        let body = plus_body();
        let cells: Vec<(i32, i32)> = body.joint_grid_2d().iter().map(|j| j.cell).collect();
        assert_eq!(cells, vec![(0, 1), (0, -1), (-1, 0), (1, 0)]);
        assert!(body.joint_grid_2d().iter().all(|j| !j.stacked));
        assert!(BodyPhenotype::core_only().joint_grid_2d().is_empty());
    }

    /// Hinges at (1,0,0) and (1,0,1): the second one is reached through a
    /// column of rotated bricks in front of the core.
    pub(crate) fn stacked_pair() -> (BodyPhenotype, ModuleId, ModuleId) {
        let mut b = BodyPhenotype::builder();
        let low = b.attach(ModuleId(0), Socket::Right, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        // Rotated front brick: its left socket points to +z.
        let brick = b.attach(ModuleId(0), Socket::Front, ModuleKind::Brick, Rotation::Deg90).unwrap();
        let riser = b.attach(brick, Socket::Left, ModuleKind::Brick, Rotation::Deg90).unwrap();
        let bridge = b.attach(riser, Socket::Left, ModuleKind::Brick, Rotation::Deg90).unwrap();
        let high = b.attach(bridge, Socket::Right, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        (b.build(), low, high)
    }

    #[test]
    fn stacked_projection_collision() {
        let (body, low, high) = stacked_pair();
        assert_eq!(body.module(low).unwrap().grid_pos, [1, 0, 0]);
        assert_eq!(body.module(high).unwrap().grid_pos, [1, 0, 1]);
        let joints = body.joint_grid_2d();
        assert_eq!(joints.len(), 2);
        assert!(joints.iter().all(|j| j.cell == (1, 0) && j.stacked));
    }

    #[test]
    fn rotated_brick_side_sockets_point_along_z() {
        let mut b = BodyPhenotype::builder();
        let brick = b.attach(ModuleId(0), Socket::Right, ModuleKind::Brick, Rotation::Deg90).unwrap();
        let up = b.attach(brick, Socket::Left, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let down = b.attach(brick, Socket::Right, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        let body = b.build();
        assert_eq!(body.module(up).unwrap().grid_pos, [1, 0, 1]);
        assert_eq!(body.module(down).unwrap().grid_pos, [1, 0, -1]);
        assert!(body.joint_grid_2d().iter().all(|j| j.stacked));
    }

    #[test]
    fn tree_distances() {
        let body = plus_body();
        assert_eq!(body.tree_distance(ModuleId(1), ModuleId(1)).unwrap(), 0);
        assert_eq!(body.tree_distance(ModuleId(1), ModuleId(2)).unwrap(), 2);
        assert_eq!(body.tree_distance(ModuleId(0), ModuleId(3)).unwrap(), 1);
        assert!(body.tree_distance(ModuleId(0), ModuleId(7)).is_err());

        let chain = decode_with(&constant([0.0, 1.0, 0.0, 1.0, 0.0])).unwrap();
        // Module 5 is the hinge chained in front of module 1.
        assert_eq!(chain.tree_distance(ModuleId(1), ModuleId(5)).unwrap(), 1);
        assert_eq!(chain.tree_distance(ModuleId(9), ModuleId(1)).unwrap(), 2);
        assert_eq!(chain.tree_distance(ModuleId(9), ModuleId(6)).unwrap(), 5);
        assert_eq!(chain.tree_distance(ModuleId(6), ModuleId(9)).unwrap(), 5);
    }

    #[test]
    fn builder_rejects_bad_attachments() {
        let mut b = BodyPhenotype::builder();
        let h = b.attach(ModuleId(0), Socket::Front, ModuleKind::ActiveHinge, Rotation::Deg0).unwrap();
        assert!(b.attach(ModuleId(0), Socket::Front, ModuleKind::Brick, Rotation::Deg0).is_err());
        assert!(b.attach(h, Socket::Left, ModuleKind::Brick, Rotation::Deg0).is_err());
        assert!(b.attach(ModuleId(0), Socket::Back, ModuleKind::Core, Rotation::Deg0).is_err());
        assert!(b.attach(ModuleId(42), Socket::Back, ModuleKind::Brick, Rotation::Deg0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let body = decode_body(&random_cppn(&mut rng, &CppnInitParams::default()));
            let text = body.to_json();
            assert!(text.contains(BODY_SCHEMA));
            assert_eq!(BodyPhenotype::from_json(&text).unwrap(), body);
        }
    }

    #[test]
    fn decoding_uses_only_cppn_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let genome = random_cppn(&mut rng, &CppnInitParams::default());
        let compiled = genome.compile();
        let mock = |q: [f64; 4]| compiled.evaluate(q).unwrap();
        assert_eq!(decode_with(&mock).unwrap(), decode_body(&genome));
    }
}
