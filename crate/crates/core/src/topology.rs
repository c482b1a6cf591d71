//! Skeleton topologies: joints, limb edges, kinematic parents, the left/right
//! flip map and the named edge-to-channel layouts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint graph plus the channel partitions used for rendering.
///
/// Channel layouts map each edge (by index) to a channel; the number of
/// channels of a layout is one more than its largest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonTopology {
    pub joints: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub parents: Vec<Option<usize>>,
    pub flip_map: Vec<usize>,
    pub channel_layouts: BTreeMap<String, Vec<usize>>,
}

/// Which topology rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    EdgeIndex,
    SelfLoop,
    ParentCount,
    ParentIndex,
    ParentCycle,
    MultipleRoots,
    FlipMapLength,
    FlipMapIndex,
    FlipNotInvolution,
    FlipBreaksEdges,
    LayoutLength,
    LayoutNotDense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

impl Violation {
    fn new(rule: Rule, message: impl Into<String>) -> Self {
        Self {
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Joint names of [`default_human_topology`], in index order.
pub const HUMAN_JOINTS: [&str; 17] = [
    "pelvis",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "spine",
    "thorax",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
];

/// 17-joint human skeleton rooted at the pelvis with "1ch", "3ch" and "5ch"
/// layouts.
pub fn default_human_topology() -> SkeletonTopology {
    let joints: Vec<String> = HUMAN_JOINTS.iter().map(|s| s.to_string()).collect();
    let parents = vec![
        None,
        Some(0),
        Some(1),
        Some(2),
        Some(0),
        Some(4),
        Some(5),
        Some(0),
        Some(7),
        Some(8),
        Some(9),
        Some(8),
        Some(11),
        Some(12),
        Some(8),
        Some(14),
        Some(15),
    ];
    // one edge per non-root joint, ordered by body part
    let edges = vec![
        // torso + head
        (0, 7),
        (7, 8),
        (8, 9),
        (9, 10),
        // left arm
        (8, 11),
        (11, 12),
        (12, 13),
        // right arm
        (8, 14),
        (14, 15),
        (15, 16),
        // left leg
        (0, 4),
        (4, 5),
        (5, 6),
        // right leg
        (0, 1),
        (1, 2),
        (2, 3),
    ];
    let flip_map = vec![0, 4, 5, 6, 1, 2, 3, 7, 8, 9, 10, 14, 15, 16, 11, 12, 13];

    let part = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4];
    let mut channel_layouts = BTreeMap::new();
    channel_layouts.insert("1ch".to_string(), vec![0; edges.len()]);
    channel_layouts.insert(
        "3ch".to_string(),
        part.iter().map(|&p| [0, 1, 1, 2, 2][p]).collect(),
    );
    channel_layouts.insert("5ch".to_string(), part.to_vec());

    SkeletonTopology {
        joints,
        edges,
        parents,
        flip_map,
        channel_layouts,
    }
}

impl SkeletonTopology {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j == name)
    }

    /// Per-edge channel assignment of a layout.
    pub fn layout(&self, id: &str) -> Result<&[usize]> {
        self.channel_layouts
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLayout(id.to_string()))
    }

    pub fn channel_count(&self, id: &str) -> Result<usize> {
        Ok(self.layout(id)?.iter().max().map_or(0, |c| c + 1))
    }

    /// The unique layout with `channels` channels, if exactly one exists.
    pub fn layout_for_channels(&self, channels: usize) -> Option<&str> {
        let mut found = self
            .channel_layouts
            .iter()
            .filter(|(_, l)| l.iter().max().map_or(0, |c| c + 1) == channels)
            .map(|(k, _)| k.as_str());
        let first = found.next()?;
        found.next().is_none().then_some(first)
    }

    pub fn root(&self) -> Option<usize> {
        self.parents.iter().position(Option::is_none)
    }

    /// Children lists derived from `parents`.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.joints.len()];
        for (k, p) in self.parents.iter().enumerate() {
            if let Some(p) = *p {
                if p < children.len() {
                    children[p].push(k);
                }
            }
        }
        children
    }

    /// Joint indices ordered so every parent precedes its children.
    ///
    /// Fails unless the parents describe exactly one rooted tree.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.joints.len();
        if self.parents.len() != n {
            return Err(Error::NotATree(format!(
                "{} parents for {} joints",
                self.parents.len(),
                n
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&k| self.parents[k].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::NotATree(format!("{} roots", roots.len())));
        }
        let children = self.children();
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![roots[0]];
        while let Some(k) = stack.pop() {
            order.push(k);
            stack.extend(children[k].iter().rev());
        }
        if order.len() != n {
            return Err(Error::NotATree(format!(
                "{} of {} joints reachable from the root",
                order.len(),
                n
            )));
        }
        Ok(order)
    }

    /// Checks every structural invariant; an empty list means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.joints.len();
        let mut out = Vec::new();

        for (e, &(i, j)) in self.edges.iter().enumerate() {
            if i >= n || j >= n {
                out.push(Violation::new(
                    Rule::EdgeIndex,
                    format!("edge {e}: joint index out of range ({i}, {j})"),
                ));
            } else if i == j {
                out.push(Violation::new(Rule::SelfLoop, format!("edge {e}: self-loop")));
            }
        }

        if self.parents.len() != n {
            out.push(Violation::new(
                Rule::ParentCount,
                format!("parents: {} entries for {} joints", self.parents.len(), n),
            ));
        } else {
            let mut parents_ok = true;
            for (k, p) in self.parents.iter().enumerate() {
                if let Some(p) = *p {
                    if p >= n || p == k {
                        parents_ok = false;
                        out.push(Violation::new(
                            Rule::ParentIndex,
                            format!("joint {k}: invalid parent {p}"),
                        ));
                    }
                }
            }
            if parents_ok {
                out.extend(self.parent_cycles());
                out.extend(self.extra_roots());
            }
        }

        let flip_ok = self.check_flip_map(&mut out);
        if flip_ok && out.iter().all(|v| v.rule != Rule::EdgeIndex) {
            let set: BTreeSet<(usize, usize)> =
                self.edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
            for (e, &(i, j)) in self.edges.iter().enumerate() {
                let (a, b) = (self.flip_map[i], self.flip_map[j]);
                if !set.contains(&(a.min(b), a.max(b))) {
                    out.push(Violation::new(
                        Rule::FlipBreaksEdges,
                        format!("edge {e}: flipped pair ({a}, {b}) is not an edge"),
                    ));
                }
            }
        }

        for (name, layout) in &self.channel_layouts {
            if layout.len() != self.edges.len() {
                out.push(Violation::new(
                    Rule::LayoutLength,
                    format!(
                        "layout {name}: {} channel entries for {} edges",
                        layout.len(),
                        self.edges.len()
                    ),
                ));
                continue;
            }
            let used: BTreeSet<usize> = layout.iter().copied().collect();
            let count = used.iter().next_back().map_or(0, |c| c + 1);
            for c in 0..count {
                if !used.contains(&c) {
                    out.push(Violation::new(
                        Rule::LayoutNotDense,
                        format!("layout {name}: channel {c} has no edges"),
                    ));
                }
            }
        }
        out
    }

    fn check_flip_map(&self, out: &mut Vec<Violation>) -> bool {
        let n = self.joints.len();
        if self.flip_map.len() != n {
            out.push(Violation::new(
                Rule::FlipMapLength,
                format!("flip_map: {} entries for {} joints", self.flip_map.len(), n),
            ));
            return false;
        }
        let mut ok = true;
        for (k, &f) in self.flip_map.iter().enumerate() {
            if f >= n {
                ok = false;
                out.push(Violation::new(
                    Rule::FlipMapIndex,
                    format!("flip_map[{k}] = {f} out of range"),
                ));
            }
        }
        if !ok {
            return false;
        }
        for (k, &f) in self.flip_map.iter().enumerate() {
            if self.flip_map[f] != k {
                ok = false;
                out.push(Violation::new(
                    Rule::FlipNotInvolution,
                    format!("flip_map: joint {k} maps to {f} which maps to {}", self.flip_map[f]),
                ));
            }
        }
        ok
    }

    fn parent_cycles(&self) -> Vec<Violation> {
        let n = self.joints.len();
        // 0 = unvisited, 1 = on current path, 2 = done
        let mut state = vec![0u8; n];
        let mut out = Vec::new();
        for start in 0..n {
            let mut path = Vec::new();
            let mut k = start;
            loop {
                match state[k] {
                    2 => break,
                    1 => {
                        out.push(Violation::new(
                            Rule::ParentCycle,
                            format!("joint {k}: parent chain forms a cycle"),
                        ));
                        break;
                    }
                    _ => {}
                }
                state[k] = 1;
                path.push(k);
                match self.parents[k] {
                    Some(p) => k = p,
                    None => break,
                }
            }
            for p in path {
                state[p] = 2;
            }
        }
        out
    }

    fn extra_roots(&self) -> Vec<Violation> {
        let n = self.joints.len();
        // union-find over edges and parent links
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let links = self
            .edges
            .iter()
            .copied()
            .filter(|&(i, j)| i < n && j < n)
            .chain(
                self.parents
                    .iter()
                    .enumerate()
                    .filter_map(|(k, p)| p.map(|p| (k, p))),
            );
        for (a, b) in links {
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            uf[ra] = rb;
        }
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for k in 0..n {
            if self.parents[k].is_none() {
                let c = find(&mut uf, k);
                if let Some(first) = seen.insert(c, k) {
                    out.push(Violation::new(
                        Rule::MultipleRoots,
                        format!("joints {first} and {k}: two roots in one component"),
                    ));
                }
            }
        }
        out
    }

    /// Fails with [`Error::InvalidTopology`] when [`validate`](Self::validate)
    /// reports anything.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidTopology(v))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("topology", e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}
