//! Per-candidate snapshots of the weighted, directed user-talk graph.
//!
//! A snapshot aggregates every user-talk message posted strictly before a
//! cutoff: edge `(u, v)` carries the number of messages `u` posted on `v`'s
//! talk page. The candidate (the focus) is always a node. The admin and
//! bureaucrat scopes are induced subgraphs on the focus plus the users
//! holding the role at the cutoff.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{InteractionEvent, Role, RoleAssignment, RoleBook, Timestamp, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    UserSN,
    AdminSN,
    BurSN,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::UserSN, Scope::AdminSN, Scope::BurSN];

    pub fn suffix(self) -> &'static str {
        match self {
            Scope::UserSN => "userSN",
            Scope::AdminSN => "adminSN",
            Scope::BurSN => "burSN",
        }
    }

    pub fn role(self) -> Option<Role> {
        match self {
            Scope::UserSN => None,
            Scope::AdminSN => Some(Role::Admin),
            Scope::BurSN => Some(Role::Bureaucrat),
        }
    }
}

/// An immutable weighted digraph. Nodes are sorted by name; adjacency lists
/// are sorted by neighbor index.
#[derive(Debug, Clone, PartialEq)]
pub struct TalkGraph {
    scope: Scope,
    cutoff: Timestamp,
    focus: usize,
    nodes: Vec<UserId>,
    out_adj: Vec<Vec<(usize, u64)>>,
    in_adj: Vec<Vec<(usize, u64)>>,
}

impl TalkGraph {
    /// Build from `(source, target, weight)` triples; repeated pairs add up
    /// and zero weights are ignored.
    pub fn from_edges<I>(scope: Scope, cutoff: Timestamp, focus: UserId, edges: I) -> Self
    where
        I: IntoIterator<Item = (UserId, UserId, u64)>,
    {
        let mut agg: HashMap<(UserId, UserId), u64> = HashMap::new();
        for (u, v, w) in edges {
            if w > 0 {
                *agg.entry((u, v)).or_default() += w;
            }
        }
        let mut nodes: Vec<UserId> = agg.keys().flat_map(|(u, v)| [u.clone(), v.clone()]).collect();
        nodes.push(focus.clone());
        nodes.sort();
        nodes.dedup();
        let index = |u: &UserId| nodes.binary_search(u).expect("node present");
        let local: Vec<(usize, usize, u64)> = agg.iter().map(|((u, v), &w)| (index(u), index(v), w)).collect();
        let focus = index(&focus);
        Self::assemble(scope, cutoff, focus, nodes, local)
    }

    fn assemble(
        scope: Scope,
        cutoff: Timestamp,
        focus: usize,
        nodes: Vec<UserId>,
        edges: Vec<(usize, usize, u64)>,
    ) -> Self {
        let n = nodes.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (u, v, w) in edges {
            out_adj[u].push((v, w));
            in_adj[v].push((u, w));
        }
        for l in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            l.sort_unstable();
        }
        Self { scope, cutoff, focus, nodes, out_adj, in_adj }
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn cutoff(&self) -> Timestamp {
        self.cutoff
    }

    pub fn focus(&self) -> usize {
        self.focus
    }

    pub fn focus_id(&self) -> &UserId {
        &self.nodes[self.focus]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn index_of(&self, user: &UserId) -> Option<usize> {
        self.nodes.binary_search(user).ok()
    }

    pub fn require(&self, user: &UserId) -> Result<usize> {
        self.index_of(user).ok_or_else(|| Error::UnknownNode(user.to_string()))
    }

    pub fn out_edges(&self, u: usize) -> &[(usize, u64)] {
        &self.out_adj[u]
    }

    pub fn in_edges(&self, u: usize) -> &[(usize, u64)] {
        &self.in_adj[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> u64 {
        self.out_adj[u]
            .binary_search_by_key(&v, |&(t, _)| t)
            .map_or(0, |i| self.out_adj[u][i].1)
    }

    /// All edges as `(source, target, weight)` in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().map(move |&(v, w)| (u, v, w)))
    }

    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Induced subgraph on the nodes for which `keep` holds, plus the focus.
    pub fn induced(&self, scope: Scope, keep: impl Fn(usize) -> bool) -> TalkGraph {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, u) in self.nodes.iter().enumerate() {
            if i == self.focus || keep(i) {
                map[i] = nodes.len();
                nodes.push(u.clone());
            }
        }
        let edges = self
            .edges()
            .filter(|&(u, v, _)| map[u] != usize::MAX && map[v] != usize::MAX)
            .map(|(u, v, w)| (map[u], map[v], w))
            .collect();
        TalkGraph::assemble(scope, self.cutoff, map[self.focus], nodes, edges)
    }

    /// Edge list dump: `source,target,weight`.
    pub fn write_edge_list<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["source", "target", "weight"])?;
        for (u, v, weight) in self.edges() {
            wr.write_record([self.nodes[u].as_str(), self.nodes[v].as_str(), &weight.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// User-talk messages interned for repeated snapshotting.
#[derive(Debug, Clone)]
pub struct TalkLog {
    users: Vec<UserId>,
    /// `(source, target, timestamp)` sorted by timestamp.
    events: Vec<(u32, u32, Timestamp)>,
}

impl TalkLog {
    /// Article-talk events are ignored.
    pub fn new(events: &[InteractionEvent]) -> Self {
        let mut users: Vec<UserId> = events
            .iter()
            .filter_map(|e| e.target().map(|t| [e.source.clone(), t.clone()]))
            .flatten()
            .collect();
        users.sort();
        users.dedup();
        let idx = |u: &UserId| users.binary_search(u).expect("interned") as u32;
        let mut ev: Vec<(u32, u32, Timestamp)> = events
            .iter()
            .filter_map(|e| e.target().map(|t| (idx(&e.source), idx(t), e.timestamp)))
            .collect();
        ev.sort_by_key(|e| e.2);
        Self { users, events: ev }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of messages strictly before `cutoff`.
    pub fn count_before(&self, cutoff: Timestamp) -> usize {
        self.events.partition_point(|e| e.2 < cutoff)
    }

    pub fn snapshot(&self, focus: &UserId, cutoff: Timestamp) -> TalkGraph {
        let prefix = &self.events[..self.count_before(cutoff)];
        let mut agg: HashMap<(u32, u32), u64> = HashMap::new();
        for &(u, v, _) in prefix {
            *agg.entry((u, v)).or_default() += 1;
        }
        let mut global: Vec<u32> = agg.keys().flat_map(|&(u, v)| [u, v]).collect();
        global.sort_unstable();
        global.dedup();

        let mut nodes: Vec<UserId> = global.iter().map(|&g| self.users[g as usize].clone()).collect();
        let (focus_idx, inserted) = match nodes.binary_search(focus) {
            Ok(i) => (i, false),
            Err(i) => {
                nodes.insert(i, focus.clone());
                (i, true)
            }
        };
        let local = |g: u32| {
            let i = global.binary_search(&g).expect("endpoint");
            if inserted && i >= focus_idx {
                i + 1
            } else {
                i
            }
        };
        let edges = agg.into_iter().map(|((u, v), w)| (local(u), local(v), w)).collect();
        TalkGraph::assemble(Scope::UserSN, cutoff, focus_idx, nodes, edges)
    }
}

/// Snapshot of all user-talk messages before `cutoff`, focused on `focus`.
pub fn build_snapshot(events: &[InteractionEvent], focus: &UserId, cutoff: Timestamp) -> TalkGraph {
    TalkLog::new(events).snapshot(focus, cutoff)
}

/// Restrict a snapshot to the focus and the holders of `role` at its cutoff.
pub fn restrict_to_roles(g: &TalkGraph, roles: &[RoleAssignment], role: Role) -> TalkGraph {
    restrict_with(g, &RoleBook::new(roles), role)
}

pub fn restrict_with(g: &TalkGraph, book: &RoleBook, role: Role) -> TalkGraph {
    let scope = match role {
        Role::Admin => Scope::AdminSN,
        Role::Bureaucrat => Scope::BurSN,
    };
    g.induced(scope, |i| book.holds(&g.nodes()[i], role, g.cutoff()))
}

/// The three scoped snapshots of one candidate.
pub fn scoped_snapshots(log: &TalkLog, book: &RoleBook, focus: &UserId, cutoff: Timestamp) -> [TalkGraph; 3] {
    let user = log.snapshot(focus, cutoff);
    let admin = restrict_with(&user, book, Role::Admin);
    let bur = restrict_with(&user, book, Role::Bureaucrat);
    [user, admin, bur]
}
