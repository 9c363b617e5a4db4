//! Benchmark families: grids of rooms and chains of leaves, with or without a loop back.
//!
//! A spec reads `family:N:leaf[:options]`, e.g. `rooms:3:rms`, `chainsloop:10:dice2`
//! or `birooms:2:rmb:unsafe,windy,seed=4`. Options are comma separated:
//! `safe`/`unsafe`, `calm`/`windy`, `rounds=K` and `seed=S`.

mod dice;
mod rooms;

use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::diagram::{ModelFile, Node, OpenMdp, ProbSpec, QuerySpec, StringDiagram};
use crate::error::{Error, Result};
use crate::mdp::MdpBuilder;
use crate::numeric::Rational;

pub use dice::{gen_dice_leaf, DiceLayout, DiceParams, Die, DEFAULT_ROUNDS, DEFAULT_START, FACES, MAX_SCORE};
pub use rooms::{gen_room_leaf, grid_diagram, hole_cells, Pad, RoomParams, BIG_ROOM, SMALL_ROOM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rooms,
    Birooms,
    Chains,
    ChainsLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafKind {
    RmS,
    RmB,
    Dice2,
    Dice4,
}

impl LeafKind {
    fn name(self) -> &'static str {
        match self {
            LeafKind::RmS => "rms",
            LeafKind::RmB => "rmb",
            LeafKind::Dice2 => "dice2",
            LeafKind::Dice4 => "dice4",
        }
    }

    fn is_room(self) -> bool {
        matches!(self, LeafKind::RmS | LeafKind::RmB)
    }
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Rooms => "rooms",
            Family::Birooms => "birooms",
            Family::Chains => "chains",
            Family::ChainsLoop => "chainsloop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub family: Family,
    pub n: usize,
    pub leaf: LeafKind,
    pub safe: bool,
    pub windy: bool,
    pub rounds: usize,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(family: Family, n: usize, leaf: LeafKind) -> Self {
        Self { family, n, leaf, safe: true, windy: false, rounds: DEFAULT_ROUNDS, seed: 0 }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("benchmark size must be at least 1".into()));
        }
        if matches!(self.family, Family::Rooms | Family::Birooms) && !self.leaf.is_room() {
            return Err(Error::Config(format!("{} needs a room leaf, got {}", self.family.name(), self.leaf.name())));
        }
        if self.rounds == 0 {
            return Err(Error::Config("dice game needs at least one round".into()));
        }
        Ok(())
    }

    /// Room leaves need left ports when the diagram routes anything backwards.
    fn bidirectional(&self) -> bool {
        matches!(self.family, Family::Birooms | Family::ChainsLoop)
    }

    pub fn room_params(&self) -> RoomParams {
        let size = if self.leaf == LeafKind::RmB { BIG_ROOM } else { SMALL_ROOM };
        RoomParams { size, safe: self.safe, windy: self.windy, bidirectional: self.bidirectional(), seed: self.seed }
    }

    pub fn dice_params(&self) -> DiceParams {
        let exits = if self.leaf == LeafKind::Dice4 { 4 } else { 2 };
        DiceParams::seeded(exits, self.rounds, self.seed, DiceLayout::Chain)
    }
}

impl fmt::Display for BenchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.family.name(), self.n, self.leaf.name())?;
        let mut opts = Vec::new();
        if self.leaf.is_room() {
            if !self.safe {
                opts.push("unsafe".to_string());
            }
            if self.windy {
                opts.push("windy".to_string());
            }
        } else if self.rounds != DEFAULT_ROUNDS {
            opts.push(format!("rounds={}", self.rounds));
        }
        if self.seed != 0 {
            opts.push(format!("seed={}", self.seed));
        }
        if !opts.is_empty() {
            write!(f, ":{}", opts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for BenchSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Config(format!("benchmark spec {s:?}: {msg}"));
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad("expected family:N:leaf[:options]".into()));
        }
        let family = match parts[0].to_ascii_lowercase().as_str() {
            "rooms" => Family::Rooms,
            "birooms" => Family::Birooms,
            "chains" => Family::Chains,
            "chainsloop" => Family::ChainsLoop,
            other => return Err(bad(format!("unknown family {other:?}"))),
        };
        let n: usize = parts[1].parse().map_err(|_| bad(format!("bad size {:?}", parts[1])))?;
        let leaf = match parts[2].to_ascii_lowercase().as_str() {
            "rms" => LeafKind::RmS,
            "rmb" => LeafKind::RmB,
            "dice2" => LeafKind::Dice2,
            "dice4" => LeafKind::Dice4,
            other => return Err(bad(format!("unknown leaf {other:?}"))),
        };
        let mut spec = BenchSpec::new(family, n, leaf);
        for opt in parts.get(3).map(|o| o.split(',')).into_iter().flatten().filter(|o| !o.is_empty()) {
            match opt.split_once('=') {
                Some(("seed", v)) => spec.seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
                Some(("rounds", v)) => spec.rounds = v.parse().map_err(|_| bad(format!("bad rounds {v:?}")))?,
                None if opt == "safe" => spec.safe = true,
                None if opt == "unsafe" => spec.safe = false,
                None if opt == "calm" => spec.windy = false,
                None if opt == "windy" => spec.windy = true,
                _ => return Err(bad(format!("unknown option {opt:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Counts and dynamics recorded alongside a generated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMeta {
    pub spec: String,
    pub seed: u64,
    /// Occurrences of the model leaf (connectors excluded).
    pub occurrences: usize,
    pub components: usize,
    pub leaf: String,
    pub leaf_states: usize,
    pub connectors: Vec<String>,
    pub dynamics: serde_json::Value,
}

/// A generated benchmark: diagram, query and metadata.
#[derive(Debug, Clone)]
pub struct Bench {
    pub diagram: StringDiagram,
    pub entrance: String,
    /// Weight per global exit: one on the goal, zero elsewhere.
    pub weights: Vec<Rational>,
    pub goal: String,
    pub meta: BenchMeta,
}

impl Bench {
    pub fn model_file(&self) -> ModelFile {
        let idx = self.diagram.index().expect("generated diagrams are valid");
        let weights = idx
            .global_exit_names(&self.diagram)
            .into_iter()
            .zip(&self.weights)
            .map(|(n, w)| (n, ProbSpec::exact(w)))
            .collect();
        let query = QuerySpec { entrance: Some(self.entrance.clone()), weights: Some(weights), ..QuerySpec::default() };
        let mut file = ModelFile::from_diagram(&self.diagram, Some(query));
        file.metadata = Some(serde_json::to_value(&self.meta).expect("metadata serializes"));
        file
    }
}

/// Name of the model leaf in every generated diagram.
pub const MODEL_LEAF: &str = "M";
/// Name of the loop-back connector in `ChainsLoop`.
pub const LOOP_LEAF: &str = "Z";

/// `N` copies of `leaf` in sequence.
pub fn chain(name: &str, n: usize) -> Node {
    Node::seq_all((0..n).map(|_| Node::leaf(name))).expect("n ≥ 1")
}

/// Connector placed before a chain of `leaf`: right entrances pass straight
/// through, and every left entrance returns to the first right exit.
pub fn loop_leaf(leaf: &OpenMdp) -> Result<OpenMdp> {
    let a = leaf.arity();
    if a.m_right == 0 {
        return Err(Error::Config("loop connector needs a leaf with a right entrance".into()));
    }
    let mut b = MdpBuilder::exact();
    let starts: Vec<usize> = (0..a.m_right).map(|j| b.state(format!("start{j}"))).collect();
    let gos: Vec<usize> = (0..a.m_right).map(|j| b.state(format!("go{j}"))).collect();
    let backs: Vec<usize> = (0..a.n_left).map(|j| b.state(format!("back{j}"))).collect();
    for (&s, &g) in starts.iter().zip(&gos) {
        b.action(s, "go", vec![(g, Rational::one())]);
    }
    for &s in &backs {
        b.action(s, "retry", vec![(gos[0], Rational::one())]);
    }
    OpenMdp::new(b.build()?, starts, backs, gos, vec![])
}

pub fn gen_diagram(spec: &BenchSpec) -> Result<Bench> {
    spec.validate()?;
    let (leaf, dynamics) = if spec.leaf.is_room() {
        let p = spec.room_params();
        let holes: Vec<[usize; 2]> = hole_cells(&p).into_iter().map(|(x, y)| [x, y]).collect();
        let dyn_ = serde_json::json!({
            "size": p.size,
            "intended": crate::numeric::format_rational(&p.intended()),
            "holes": holes,
            "bidirectional": p.bidirectional,
        });
        (gen_room_leaf(&p)?, dyn_)
    } else {
        let p = spec.dice_params();
        let dyn_ = serde_json::json!({
            "exits": p.exits,
            "rounds": p.rounds,
            "start": p.start,
            "dice": p.describe(),
        });
        (gen_dice_leaf(&p)?, dyn_)
    };
    let leaf_states = leaf.num_states();
    let mut leaves: Vec<(String, OpenMdp)> = Vec::new();
    let root = match spec.family {
        Family::Rooms | Family::Birooms => {
            let (root, pads) = grid_diagram(spec.n, MODEL_LEAF, spec.family == Family::Birooms)?;
            leaves.extend(pads.into_iter().map(|p| (p.name().to_string(), p.leaf())));
            root
        }
        Family::Chains => chain(MODEL_LEAF, spec.n),
        Family::ChainsLoop => {
            leaves.push((LOOP_LEAF.to_string(), loop_leaf(&leaf)?));
            Node::seq(Node::leaf(LOOP_LEAF), chain(MODEL_LEAF, spec.n))
        }
    };
    let connectors: Vec<String> = leaves.iter().map(|(n, _)| n.clone()).collect();
    leaves.push((MODEL_LEAF.to_string(), leaf));
    let diagram = StringDiagram::build(root, leaves)?;
    let idx = diagram.index()?;
    let occurrences = diagram.root().leaf_occurrences().iter().filter(|&&l| l == MODEL_LEAF).count();
    let exits = idx.global_exit_names(&diagram);
    let entrance = idx
        .global_entrance_names(&diagram)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config("generated diagram has no entrance".into()))?;
    // The first global right exit is the goal: north of the last room, or the top band of the last die.
    let goal = exits.first().cloned().ok_or_else(|| Error::Config("generated diagram has no exit".into()))?;
    let weights = (0..exits.len()).map(|i| if i == 0 { Rational::one() } else { Rational::zero() }).collect();
    let meta = BenchMeta {
        spec: spec.to_string(),
        seed: spec.seed,
        occurrences,
        components: idx.components.len(),
        leaf: spec.leaf.name().to_string(),
        leaf_states,
        connectors,
        dynamics,
    };
    Ok(Bench { diagram, entrance, weights, goal, meta })
}
