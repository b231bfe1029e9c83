//! Coarse localization: pick a connected group of jumping cells and take the
//! centroid of their positions.

use std::collections::{BTreeSet, VecDeque};

use crate::env::{CellId, Lattice, TwinId, TwinsGrid};
use crate::geom::Point;

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveRegion {
    /// Selected cells, ascending id.
    pub cells: Vec<CellId>,
    pub centroid: Point,
    /// Connected components in the jump set before selection.
    pub component_count: usize,
}

/// 4-connected components of `cells`, each sorted, ordered by smallest id.
pub fn components(lattice: &Lattice, cells: &BTreeSet<CellId>) -> Vec<Vec<CellId>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in cells {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in lattice.neighbors(c) {
                if cells.contains(&n) && seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Arithmetic mean of `points`, `None` when empty.
pub fn centroid<I: IntoIterator<Item = Point>>(points: I) -> Option<Point> {
    let mut sum = Point::ORIGIN;
    let mut n = 0usize;
    for p in points {
        sum = sum + p;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Node-weighted shortest paths from `sources`: entering a cell costs 1
/// unless it is in `free`. Returns distances and predecessors.
fn zero_one_bfs(
    lattice: &Lattice,
    sources: &[CellId],
    free: &BTreeSet<CellId>,
) -> (Vec<usize>, Vec<Option<CellId>>) {
    let mut dist = vec![usize::MAX; lattice.len()];
    let mut parent = vec![None; lattice.len()];
    let mut deque = VecDeque::new();
    for &s in sources {
        dist[s.0] = 0;
        deque.push_back(s);
    }
    while let Some(c) = deque.pop_front() {
        let d = dist[c.0];
        for n in lattice.neighbors(c) {
            let w = usize::from(!free.contains(&n));
            if d + w < dist[n.0] {
                dist[n.0] = d + w;
                parent[n.0] = Some(c);
                if w == 0 {
                    deque.push_front(n);
                } else {
                    deque.push_back(n);
                }
            }
        }
    }
    (dist, parent)
}

fn trace(parent: &[Option<CellId>], from: CellId, into: &mut BTreeSet<CellId>) {
    let mut c = Some(from);
    while let Some(cell) = c {
        into.insert(cell);
        c = parent[cell.0];
    }
}

fn largest(comps: &[Vec<CellId>]) -> usize {
    let mut best = 0;
    for (i, c) in comps.iter().enumerate() {
        if c.len() > comps[best].len() {
            best = i;
        }
    }
    best
}

/// Smallest connected superset of three components: the best meeting cell
/// joined to each component by a cheapest path.
fn join_three(
    lattice: &Lattice,
    comps: &[Vec<CellId>],
    free: &BTreeSet<CellId>,
) -> BTreeSet<CellId> {
    let runs: Vec<_> = comps
        .iter()
        .map(|c| zero_one_bfs(lattice, c, free))
        .collect();
    let mut best: Option<(usize, CellId)> = None;
    for v in 0..lattice.len() {
        if runs.iter().any(|(d, _)| d[v] == usize::MAX) {
            continue;
        }
        let own = usize::from(!free.contains(&CellId(v)));
        let cost = runs.iter().map(|(d, _)| d[v]).sum::<usize>() - 2 * own;
        if best.is_none_or(|(b, _)| cost < b) {
            best = Some((cost, CellId(v)));
        }
    }
    let mut out = free.clone();
    if let Some((_, v)) = best {
        for (_, parent) in &runs {
            trace(parent, v, &mut out);
        }
    }
    out
}

/// Union of all components with a cheapest path from the largest component
/// to each of the others.
fn join_greedy(
    lattice: &Lattice,
    comps: &[Vec<CellId>],
    free: &BTreeSet<CellId>,
) -> BTreeSet<CellId> {
    let root = largest(comps);
    let (dist, parent) = zero_one_bfs(lattice, &comps[root], free);
    let mut out = free.clone();
    for (i, comp) in comps.iter().enumerate() {
        if i == root {
            continue;
        }
        let target = comp.iter().copied().min_by_key(|c| (dist[c.0], c.0));
        if let Some(t) = target {
            trace(&parent, t, &mut out);
        }
    }
    out
}

/// Selects the active connected subgraph from the jumping cells. Returns the
/// chosen cells and the component count, or `None` when `cells` is empty.
/// `position` gives each cell's representative point and is only consulted
/// to break a two-way tie against `previous`.
pub fn select_subgraph<F>(
    lattice: &Lattice,
    cells: &BTreeSet<CellId>,
    previous: Option<Point>,
    position: F,
) -> Option<(Vec<CellId>, usize)>
where
    F: Fn(CellId) -> Point,
{
    let comps = components(lattice, cells);
    let count = comps.len();
    let chosen = match count {
        0 => return None,
        1 => comps.into_iter().next()?,
        2 => {
            let (a, b) = (&comps[0], &comps[1]);
            let pick_b = match a.len().cmp(&b.len()) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => match previous {
                    Some(p) => {
                        let da = centroid(a.iter().map(|&c| position(c)))?.distance(p);
                        let db = centroid(b.iter().map(|&c| position(c)))?.distance(p);
                        db < da
                    }
                    None => false,
                },
            };
            comps.into_iter().nth(usize::from(pick_b))?
        }
        3 => join_three(lattice, &comps, cells).into_iter().collect(),
        _ => join_greedy(lattice, &comps, cells).into_iter().collect(),
    };
    Some((chosen, count))
}

/// Runs selection and centroid on the twins of one interval's jump set.
pub fn locate<I>(grid: &TwinsGrid, jumping: I, previous: Option<Point>) -> Option<ActiveRegion>
where
    I: IntoIterator<Item = TwinId>,
{
    let cells: BTreeSet<CellId> = jumping
        .into_iter()
        .filter_map(|t| grid.twin(t).ok().map(|r| r.cell))
        .collect();
    let (cells, component_count) =
        select_subgraph(&grid.lattice, &cells, previous, |c| grid.cell_position(c))?;
    let centroid = centroid(cells.iter().map(|&c| grid.cell_position(c)))?;
    Some(ActiveRegion {
        cells,
        centroid,
        component_count,
    })
}
