//! Grid-world room leaves and the anti-diagonal layout of room grids.

use std::collections::BTreeMap;

use num_traits::One;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagram::{Node, OpenMdp};
use crate::error::{Error, Result};
use crate::mdp::MdpBuilder;
use crate::numeric::{ratio, Rational};

pub const SMALL_ROOM: usize = 7;
pub const BIG_ROOM: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomParams {
    /// Side length of the square grid; odd so that doors sit at edge centres.
    pub size: usize,
    pub safe: bool,
    pub windy: bool,
    /// Adds left entrances at the north/east doors and left exits through the west/south doors.
    pub bidirectional: bool,
    pub seed: u64,
}

impl RoomParams {
    pub fn intended(&self) -> Rational {
        if self.windy {
            ratio(7, 10)
        } else {
            ratio(9, 10)
        }
    }

    pub fn holes(&self) -> usize {
        if self.safe {
            2
        } else {
            6
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    N,
    E,
    S,
    W,
}

impl Dir {
    const ALL: [Dir; 4] = [Dir::N, Dir::E, Dir::S, Dir::W];

    fn delta(self) -> (i64, i64) {
        match self {
            Dir::N => (0, 1),
            Dir::E => (1, 0),
            Dir::S => (0, -1),
            Dir::W => (-1, 0),
        }
    }

    fn lateral(self) -> [Dir; 2] {
        match self {
            Dir::N | Dir::S => [Dir::W, Dir::E],
            Dir::E | Dir::W => [Dir::N, Dir::S],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dir::N => "N",
            Dir::E => "E",
            Dir::S => "S",
            Dir::W => "W",
        }
    }
}

fn door(size: usize, d: Dir) -> (usize, usize) {
    let c = size / 2;
    match d {
        Dir::N => (c, size - 1),
        Dir::E => (size - 1, c),
        Dir::S => (c, 0),
        Dir::W => (0, c),
    }
}

/// Cells that become holes: seeded, never on or next to a door.
pub fn hole_cells(p: &RoomParams) -> Vec<(usize, usize)> {
    let doors: Vec<(usize, usize)> = Dir::ALL.iter().map(|&d| door(p.size, d)).collect();
    let near = |(x, y): (usize, usize)| doors.iter().any(|&(dx, dy)| x.abs_diff(dx) + y.abs_diff(dy) <= 1);
    let candidates: Vec<(usize, usize)> =
        (0..p.size).flat_map(|x| (0..p.size).map(move |y| (x, y))).filter(|&c| !near(c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut holes: Vec<(usize, usize)> = candidates.choose_multiple(&mut rng, p.holes()).copied().collect();
    holes.sort_unstable();
    holes
}

fn cell_name(x: usize, y: usize) -> String {
    format!("x{x}y{y}")
}

/// A square grid world with imprecise movement.
///
/// Right entrances are the west and south door cells, right exits lie past the
/// north and east doors. Bidirectional rooms add left entrances at the north
/// and east door cells and left exits past the west and south doors.
pub fn gen_room_leaf(p: &RoomParams) -> Result<OpenMdp> {
    if p.size < 3 || p.size % 2 == 0 {
        return Err(Error::Config(format!("room size must be odd and at least 3, got {}", p.size)));
    }
    let n = p.size;
    let mut b = MdpBuilder::exact();
    for x in 0..n {
        for y in 0..n {
            b.state(cell_name(x, y));
        }
    }
    let exit_dirs: &[Dir] = if p.bidirectional { &Dir::ALL } else { &[Dir::N, Dir::E] };
    let exits: BTreeMap<&str, usize> =
        exit_dirs.iter().map(|d| (d.name(), b.state(format!("exit_{}", d.name())))).collect();
    let cell = |b: &MdpBuilder, x: usize, y: usize| b.lookup(&cell_name(x, y)).expect("cell exists");
    let step = |b: &MdpBuilder, x: usize, y: usize, d: Dir| -> usize {
        let (dx, dy) = d.delta();
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if (0..n as i64).contains(&nx) && (0..n as i64).contains(&ny) {
            return cell(b, nx as usize, ny as usize);
        }
        match exits.get(d.name()) {
            Some(&e) if door(n, d) == (x, y) => e,
            _ => cell(b, x, y),
        }
    };
    let holes = hole_cells(p);
    let intended = p.intended();
    let slip = (Rational::one() - &intended) / ratio(2, 1);
    for x in 0..n {
        for y in 0..n {
            let s = cell(&b, x, y);
            for d in Dir::ALL {
                let dist = if holes.contains(&(x, y)) {
                    vec![(s, Rational::one())]
                } else {
                    let [l, r] = d.lateral();
                    vec![
                        (step(&b, x, y, d), intended.clone()),
                        (step(&b, x, y, l), slip.clone()),
                        (step(&b, x, y, r), slip.clone()),
                    ]
                };
                b.action(s, d.name(), dist);
            }
        }
    }
    let door_cell = |b: &MdpBuilder, d: Dir| {
        let (x, y) = door(n, d);
        cell(b, x, y)
    };
    let ri = vec![door_cell(&b, Dir::W), door_cell(&b, Dir::S)];
    let ro = vec![exits["N"], exits["E"]];
    let (li, lo) = if p.bidirectional {
        (vec![door_cell(&b, Dir::N), door_cell(&b, Dir::E)], vec![exits["W"], exits["S"]])
    } else {
        (vec![], vec![])
    };
    OpenMdp::new(b.build()?, ri, li, ro, lo)
}

/// Connector leaves that absorb or feed a single unmatched wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pad {
    /// One right entrance, no exits.
    RightSink,
    /// One right exit, never reached.
    RightSource,
    /// One left entrance, no exits.
    LeftSink,
    /// One left exit, never reached.
    LeftSource,
}

impl Pad {
    pub const ALL: [Pad; 4] = [Pad::RightSink, Pad::RightSource, Pad::LeftSink, Pad::LeftSource];

    pub fn name(self) -> &'static str {
        match self {
            Pad::RightSink => "pad_rsink",
            Pad::RightSource => "pad_rsrc",
            Pad::LeftSink => "pad_lsink",
            Pad::LeftSource => "pad_lsrc",
        }
    }

    pub fn leaf(self) -> OpenMdp {
        let mut b = MdpBuilder::exact();
        let s = b.state("x");
        let m = b.build().expect("single sink state");
        let v = vec![s];
        let result = match self {
            Pad::RightSink => OpenMdp::new(m, v, vec![], vec![], vec![]),
            Pad::RightSource => OpenMdp::new(m, vec![], vec![], v, vec![]),
            Pad::LeftSink => OpenMdp::new(m, vec![], v, vec![], vec![]),
            Pad::LeftSource => OpenMdp::new(m, vec![], vec![], vec![], v),
        };
        result.expect("pad is well formed")
    }
}

/// One emitted port: owning block and the receiving port, if any.
type Emit = (usize, Option<usize>);

fn gap_before(blocks: &[usize], j: usize, num_blocks: usize) -> Result<usize> {
    if j == blocks.len() {
        return Ok(num_blocks);
    }
    if j > 0 && blocks[j - 1] == blocks[j] {
        return Err(Error::Config("unmatched wire inside a block".into()));
    }
    Ok(blocks[j])
}

/// Walks a monotone partial matching between emitted and received ports and
/// returns the gaps where the receiving layer needs sinks and where the
/// emitting layer needs sources.
fn merge(
    emit: &[Emit],
    recv_blocks: &[usize],
    emit_layer: usize,
    recv_layer: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let emit_blocks: Vec<usize> = emit.iter().map(|e| e.0).collect();
    let mut matched = vec![false; recv_blocks.len()];
    for &(_, t) in emit {
        if let Some(t) = t {
            matched[t] = true;
        }
    }
    let (mut sinks, mut sources) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < emit.len() || j < recv_blocks.len() {
        if i < emit.len() && emit[i].1.is_none() {
            sinks.push(gap_before(recv_blocks, j, recv_layer)?);
            i += 1;
        } else if j < recv_blocks.len() && !matched[j] {
            sources.push(gap_before(&emit_blocks, i, emit_layer)?);
            j += 1;
        } else if i < emit.len() && emit[i].1 == Some(j) {
            i += 1;
            j += 1;
        } else {
            return Err(Error::Config("wiring is not monotone".into()));
        }
    }
    Ok((sinks, sources))
}

/// Rooms of anti-diagonal `k = x + y`, ascending in `x`.
fn layer(n: usize, k: usize) -> Vec<usize> {
    (1..=n).filter(|&x| k > x && k - x >= 1 && k - x <= n).collect()
}

/// Lays out an `n × n` grid of rooms as a sequence of anti-diagonal layers,
/// each a sum of rooms with connector pads inserted where a neighbour is missing.
/// Returns the root and the pads used.
pub fn grid_diagram(n: usize, room: &str, bidirectional: bool) -> Result<(Node, Vec<Pad>)> {
    let layers: Vec<Vec<usize>> = (2..=2 * n).map(|k| layer(n, k)).collect();
    let mut pads: Vec<Vec<(usize, Pad)>> = vec![Vec::new(); layers.len()];
    for li in 0..layers.len().saturating_sub(1) {
        let k = li + 2;
        let (a, b) = (&layers[li], &layers[li + 1]);
        let pos_b = |x: usize| b.iter().position(|&v| v == x);
        // Right wires: N → S of (x, y+1), E → W of (x+1, y); receiving ports are [W, S] per room.
        let mut emit = Vec::new();
        for (bi, &x) in a.iter().enumerate() {
            let y = k - x;
            let north = (y < n).then(|| pos_b(x)).flatten().map(|p| 2 * p + 1);
            let east = (x < n).then(|| pos_b(x + 1)).flatten().map(|p| 2 * p);
            emit.push((bi, north));
            emit.push((bi, east));
        }
        let recv: Vec<usize> = (0..b.len()).flat_map(|p| [p, p]).collect();
        let (sinks, sources) = merge(&emit, &recv, a.len(), b.len())?;
        pads[li + 1].extend(sinks.into_iter().map(|g| (g, Pad::RightSink)));
        pads[li].extend(sources.into_iter().map(|g| (g, Pad::RightSource)));
        if bidirectional {
            // Left wires: W → E of (x-1, y), S → N of (x, y-1); receiving ports are [N, E] per room.
            let pos_a = |x: usize| a.iter().position(|&v| v == x);
            let mut emit = Vec::new();
            for (bi, &x) in b.iter().enumerate() {
                let y = k + 1 - x;
                let west = (x > 1).then(|| pos_a(x - 1)).flatten().map(|p| 2 * p + 1);
                let south = (y > 1).then(|| pos_a(x)).flatten().map(|p| 2 * p);
                emit.push((bi, west));
                emit.push((bi, south));
            }
            let recv: Vec<usize> = (0..a.len()).flat_map(|p| [p, p]).collect();
            let (sinks, sources) = merge(&emit, &recv, b.len(), a.len())?;
            pads[li].extend(sinks.into_iter().map(|g| (g, Pad::LeftSink)));
            pads[li + 1].extend(sources.into_iter().map(|g| (g, Pad::LeftSource)));
        }
    }
    let mut used = Vec::new();
    let mut stages = Vec::new();
    for (rooms, mut p) in layers.iter().zip(pads) {
        p.sort();
        let mut blocks = Vec::new();
        for g in 0..=rooms.len() {
            for &(_, pad) in p.iter().filter(|(pg, _)| *pg == g) {
                blocks.push(Node::leaf(pad.name()));
                if !used.contains(&pad) {
                    used.push(pad);
                }
            }
            if g < rooms.len() {
                blocks.push(Node::leaf(room));
            }
        }
        stages.push(Node::sum_all(blocks).expect("layer is non-empty"));
    }
    used.sort();
    Ok((Node::seq_all(stages).expect("grid is non-empty"), used))
}
