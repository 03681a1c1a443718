//! Random unit-disk topologies on a square and their neighborhood structure.

use rand::Rng;
use std::collections::VecDeque;
use std::fmt::Write as _;
use thiserror::Error;

/// Rejection-sampling budget for connected topologies.
pub const DEFAULT_RETRY_BUDGET: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology parameter: {0}")]
    InvalidParameter(String),
    #[error("no connected topology found in {0} attempts")]
    GenerationFailure(usize),
    #[error("node index {index} out of range for {nodes} nodes")]
    NodeOutOfRange { index: usize, nodes: usize },
    #[error("malformed topology dump at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, TopologyError>;

/// Node placement plus the derived one-hop and two-hop neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    positions: Vec<(f64, f64)>,
    side: f64,
    radius: f64,
    neighbors: Vec<Vec<usize>>,
    two_hop: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds the unit-disk graph over given positions; distance `<= radius`
    /// makes a link.
    pub fn from_positions(positions: Vec<(f64, f64)>, side: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(TopologyError::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if !(side > 0.0) {
            return Err(TopologyError::InvalidParameter(format!("side must be positive, got {side}")));
        }
        let n = positions.len();
        let r2 = radius * radius;
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                if dx * dx + dy * dy <= r2 {
                    neighbors[i].push(j);
                    neighbors[j].push(i);
                }
            }
        }
        for list in neighbors.iter_mut() {
            list.sort_unstable();
        }
        let two_hop = compute_two_hop(&neighbors);
        Ok(Self {
            positions,
            side,
            radius,
            neighbors,
            two_hop,
        })
    }

    /// Builds a topology from an explicit undirected edge list (positions are
    /// left at the origin). Used for hand-made graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(TopologyError::NodeOutOfRange { index: a.max(b), nodes: n });
            }
            if a == b {
                return Err(TopologyError::InvalidParameter(format!("self-loop at {a}")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in neighbors.iter_mut() {
            list.sort_unstable();
        }
        let two_hop = compute_two_hop(&neighbors);
        Ok(Self {
            positions: vec![(0.0, 0.0); n],
            side: 1.0,
            radius: 1.0,
            neighbors,
            two_hop,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn two_hop(&self, i: usize) -> &[usize] {
        &self.two_hop[i]
    }

    /// Per-node two-hop lists: nodes at hop distance exactly two.
    pub fn two_hop_sets(&self) -> &[Vec<usize>] {
        &self.two_hop
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Nodes per km² implied by the side length.
    pub fn density(&self) -> f64 {
        let side_km = self.side / 1000.0;
        self.len() as f64 / (side_km * side_km)
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn hop_counts(&self, source: usize) -> Vec<Option<usize>> {
        let mut hops = vec![None; self.len()];
        if source >= self.len() {
            return hops;
        }
        hops[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let h = hops[v].expect("queued nodes have a hop count");
            for &w in &self.neighbors[v] {
                if hops[w].is_none() {
                    hops[w] = Some(h + 1);
                    queue.push_back(w);
                }
            }
        }
        hops
    }

    pub fn is_connected(&self) -> bool {
        !self.is_empty() && self.hop_counts(0).iter().all(Option::is_some)
    }

    /// `{i} ∪ {i' : N_{i'} ∩ N_i ≠ ∅}`, sorted.
    pub fn player_ensemble(&self, i: usize) -> Result<Vec<usize>> {
        if i >= self.len() {
            return Err(TopologyError::NodeOutOfRange { index: i, nodes: self.len() });
        }
        let mut members: Vec<usize> = (0..self.len())
            .filter(|&k| k == i || self.shared_neighbors(i, k) > 0)
            .collect();
        members.sort_unstable();
        Ok(members)
    }

    /// `|N_i ∩ N_k|`.
    pub fn shared_neighbors(&self, i: usize, k: usize) -> usize {
        let (a, b) = (&self.neighbors[i], &self.neighbors[k]);
        let (mut x, mut y, mut count) = (0, 0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        count
    }

    /// CSV dump: a `# side_m=.. radius_m=..` line, then `node,x_m,y_m` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# side_m={} radius_m={}", self.side, self.radius);
        out.push_str("node,x_m,y_m\n");
        for (i, (x, y)) in self.positions.iter().enumerate() {
            let _ = writeln!(out, "{i},{x},{y}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, reason: &str| TopologyError::Parse {
            line: line + 1,
            reason: reason.to_string(),
        };
        let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| parse_err(ln, "expected '# side_m=.. radius_m=..'"))?;
        let mut side = None;
        let mut radius = None;
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| parse_err(ln, "expected key=value"))?;
            let value: f64 = value.parse().map_err(|_| parse_err(ln, "bad number"))?;
            match key {
                "side_m" => side = Some(value),
                "radius_m" => radius = Some(value),
                _ => return Err(parse_err(ln, "unknown header key")),
            }
        }
        let side = side.ok_or_else(|| parse_err(ln, "missing side_m"))?;
        let radius = radius.ok_or_else(|| parse_err(ln, "missing radius_m"))?;
        match lines.next() {
            Some((_, "node,x_m,y_m")) => {}
            Some((ln, _)) => return Err(parse_err(ln, "expected column header node,x_m,y_m")),
            None => return Err(parse_err(1, "missing column header")),
        }
        let mut positions = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(parse_err(ln, "expected three columns"));
            }
            let node: usize = cols[0].parse().map_err(|_| parse_err(ln, "bad node index"))?;
            if node != positions.len() {
                return Err(parse_err(ln, "node indices must be consecutive from 0"));
            }
            let x: f64 = cols[1].parse().map_err(|_| parse_err(ln, "bad x"))?;
            let y: f64 = cols[2].parse().map_err(|_| parse_err(ln, "bad y"))?;
            positions.push((x, y));
        }
        Self::from_positions(positions, side, radius)
    }
}

fn compute_two_hop(neighbors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = neighbors.len();
    let mut mark = vec![usize::MAX; n];
    (0..n)
        .map(|i| {
            mark[i] = i;
            for &j in &neighbors[i] {
                mark[j] = i;
            }
            let mut two = Vec::new();
            for &j in &neighbors[i] {
                for &k in &neighbors[j] {
                    if mark[k] != i {
                        mark[k] = i;
                        two.push(k);
                    }
                }
            }
            two.sort_unstable();
            two
        })
        .collect()
}

/// Places `n` nodes uniformly on a square sized for `density` nodes/km² and
/// links pairs within `radius` meters. With `require_connected`, resamples
/// until the graph is connected or the retry budget runs out.
pub fn generate_topology<R: Rng + ?Sized>(
    n: usize,
    density: f64,
    radius: f64,
    rng: &mut R,
    require_connected: bool,
) -> Result<Topology> {
    generate_topology_with_budget(n, density, radius, rng, require_connected, DEFAULT_RETRY_BUDGET)
}

pub fn generate_topology_with_budget<R: Rng + ?Sized>(
    n: usize,
    density: f64,
    radius: f64,
    rng: &mut R,
    require_connected: bool,
    retry_budget: usize,
) -> Result<Topology> {
    if n < 2 {
        return Err(TopologyError::InvalidParameter(format!("need at least 2 nodes, got {n}")));
    }
    if !(density > 0.0) || !density.is_finite() {
        return Err(TopologyError::InvalidParameter(format!("density must be positive, got {density}")));
    }
    if !(radius > 0.0) {
        return Err(TopologyError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let side = (n as f64 / density).sqrt() * 1000.0;
    let attempts = if require_connected { retry_budget.max(1) } else { 1 };
    for _ in 0..attempts {
        let positions: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random::<f64>() * side, rng.random::<f64>() * side))
            .collect();
        let topology = Topology::from_positions(positions, side, radius)?;
        if !require_connected || topology.is_connected() {
            return Ok(topology);
        }
    }
    Err(TopologyError::GenerationFailure(attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn side_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = generate_topology(50, 20.0, 250.0, &mut rng, false).unwrap();
        assert!((t.side() - 2.5f64.sqrt() * 1000.0).abs() < 1e-9);
        assert!((t.side() - 1581.0).abs() < 1.0);
        let t = generate_topology(50, 170.0, 250.0, &mut rng, false).unwrap();
        assert!((t.side() - 542.0).abs() < 1.0);
        assert!((t.density() - 170.0).abs() < 1e-9);
    }

    #[test]
    fn pair_within_range() {
        let t = Topology::from_positions(vec![(0.0, 0.0), (100.0, 0.0)], 200.0, 250.0).unwrap();
        assert_eq!(t.neighbors(0), &[1]);
        assert_eq!(t.neighbors(1), &[0]);
        // closed ball: exactly at the radius counts
        let t = Topology::from_positions(vec![(0.0, 0.0), (250.0, 0.0)], 300.0, 250.0).unwrap();
        assert!(t.are_neighbors(0, 1));
    }

    #[test]
    fn two_hop_examples() {
        let path = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(path.two_hop(0), &[2]);
        let k4 = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert!(k4.two_hop_sets().iter().all(Vec::is_empty));
        let star = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(star.two_hop(1), &[2, 3]);
    }

    #[test]
    fn ensembles() {
        // two disjoint edges: 0-1 and 2-3
        let t = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(t.player_ensemble(0).unwrap(), vec![0]);
        let k4 = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(k4.player_ensemble(2).unwrap(), vec![0, 1, 2, 3]);
        // i=0, i'=1 share j=3, k=4; i''=2 shares l=5 with i.
        let fig = Topology::from_edges(6, &[(0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (2, 5)]).unwrap();
        assert_eq!(fig.player_ensemble(0).unwrap(), vec![0, 1, 2]);
        assert!(t.player_ensemble(9).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = generate_topology(30, 50.0, 250.0, &mut rng, true).unwrap();
        let back = Topology::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert!(Topology::from_csv("node,x_m,y_m\n").is_err());
        assert!(Topology::from_csv("# side_m=1 radius_m=1\nnode,x_m,y_m\n1,0,0\n").is_err());
    }

    #[test]
    fn generation_failure_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = generate_topology_with_budget(50, 1.0, 1.0, &mut rng, true, 3);
        assert_eq!(r, Err(TopologyError::GenerationFailure(3)));
        assert!(generate_topology(1, 10.0, 250.0, &mut rng, true).is_err());
        assert!(generate_topology(5, 0.0, 250.0, &mut rng, true).is_err());
    }
}
