//! Fixed routing topology: links, paths and their incidence structure.
//!
//! Links are logical (IP-level hops collapsed), identified by dense integer
//! ids. The topology carries no capacity or bandwidth attributes; it is pure
//! incidence structure over which inference runs.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PabError, Result};

/// Dense link identifier, contiguous `0..N-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

/// Dense path identifier, contiguous `0..M-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PathId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinkRecord {
    id: u32,
    from: u32,
    to: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathRecord {
    id: u32,
    src: u32,
    dst: u32,
    links: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyFile {
    nodes: Vec<String>,
    links: Vec<LinkRecord>,
    paths: Vec<PathRecord>,
}

/// Node names and endpoint assignments, kept so a topology can be written
/// back to file. Inference never looks at this.
#[derive(Debug, Clone)]
struct TopologyMeta {
    nodes: Vec<String>,
    link_endpoints: Vec<(u32, u32)>,
    path_endpoints: Vec<(u32, u32)>,
}

/// Immutable routing topology with precomputed incidence maps.
#[derive(Debug, Clone)]
pub struct Topology {
    n_links: usize,
    links_of_path: Vec<Vec<LinkId>>,
    paths_of_link: Vec<Vec<PathId>>,
    meta: Option<TopologyMeta>,
}

impl Topology {
    /// Builds a topology from raw path link-lists, validating invariants:
    /// every path has at least one link, every link appears in at least one
    /// path, and all referenced link ids are below `n_links`.
    pub fn from_paths(n_links: usize, paths: Vec<Vec<LinkId>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(PabError::Topology("topology has no paths".into()));
        }
        let mut paths_of_link: Vec<Vec<PathId>> = vec![Vec::new(); n_links];
        for (p, links) in paths.iter().enumerate() {
            if links.is_empty() {
                return Err(PabError::Topology(format!("path {p} has no links")));
            }
            for l in links {
                if l.index() >= n_links {
                    return Err(PabError::Topology(format!(
                        "path {p} references unknown link {}",
                        l.0
                    )));
                }
                let pid = PathId(p as u32);
                if !paths_of_link[l.index()].contains(&pid) {
                    paths_of_link[l.index()].push(pid);
                }
            }
        }
        if let Some(l) = paths_of_link.iter().position(|ps| ps.is_empty()) {
            return Err(PabError::Topology(format!(
                "link {l} does not appear in any path"
            )));
        }
        Ok(Self {
            n_links,
            links_of_path: paths,
            paths_of_link,
            meta: None,
        })
    }

    /// Number of links, `N`.
    pub fn n_links(&self) -> usize {
        self.n_links
    }

    /// Number of paths, `M`.
    pub fn n_paths(&self) -> usize {
        self.links_of_path.len()
    }

    /// `L_p`: the ordered links composing path `p`.
    pub fn links_of_path(&self, p: PathId) -> &[LinkId] {
        &self.links_of_path[p.index()]
    }

    /// `P_l`: the paths that include link `l`.
    pub fn paths_of_link(&self, l: LinkId) -> &[PathId] {
        &self.paths_of_link[l.index()]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> {
        (0..self.n_links as u32).map(LinkId)
    }

    pub fn path_ids(&self) -> impl Iterator<Item = PathId> {
        (0..self.links_of_path.len() as u32).map(PathId)
    }

    /// Both incidence maps: `(P_l per link, L_p per path)`.
    pub fn incidence(&self) -> (&[Vec<PathId>], &[Vec<LinkId>]) {
        (&self.paths_of_link, &self.links_of_path)
    }
}

/// Loads a topology from the JSON file format, assigning ids in file order.
/// Link and path `id` fields must match their position in the file.
pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology> {
    let text = std::fs::read_to_string(path)?;
    parse_topology(&text)
}

/// Parses the topology JSON format from a string.
pub fn parse_topology(text: &str) -> Result<Topology> {
    let file: TopologyFile = serde_json::from_str(text)?;
    let n_nodes = file.nodes.len() as u32;
    for (i, l) in file.links.iter().enumerate() {
        if l.id != i as u32 {
            return Err(PabError::Topology(format!(
                "link id {} at position {i}: ids must be contiguous in file order",
                l.id
            )));
        }
        if l.from >= n_nodes || l.to >= n_nodes {
            return Err(PabError::Topology(format!(
                "link {} references unknown node",
                l.id
            )));
        }
    }
    let n_links = file.links.len();
    let mut paths = Vec::with_capacity(file.paths.len());
    let mut path_endpoints = Vec::with_capacity(file.paths.len());
    for (i, p) in file.paths.iter().enumerate() {
        if p.id != i as u32 {
            return Err(PabError::Topology(format!(
                "path id {} at position {i}: ids must be contiguous in file order",
                p.id
            )));
        }
        if p.src >= n_nodes || p.dst >= n_nodes {
            return Err(PabError::Topology(format!(
                "path {} references unknown node",
                p.id
            )));
        }
        for l in &p.links {
            if *l as usize >= n_links {
                return Err(PabError::Topology(format!(
                    "path {} references unknown link {l}",
                    p.id
                )));
            }
        }
        paths.push(p.links.iter().map(|l| LinkId(*l)).collect());
        path_endpoints.push((p.src, p.dst));
    }
    let mut topo = Topology::from_paths(n_links, paths)?;
    topo.meta = Some(TopologyMeta {
        nodes: file.nodes,
        link_endpoints: file.links.iter().map(|l| (l.from, l.to)).collect(),
        path_endpoints,
    });
    Ok(topo)
}

/// Writes a topology to the JSON file format. Topologies built from raw path
/// lists get fabricated node names (one pseudo-node per link endpoint).
pub fn save_topology(topo: &Topology, path: impl AsRef<Path>) -> Result<()> {
    let file = to_file_repr(topo);
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn to_file_repr(topo: &Topology) -> TopologyFile {
    let (nodes, link_endpoints, path_endpoints) = match &topo.meta {
        Some(m) => (
            m.nodes.clone(),
            m.link_endpoints.clone(),
            m.path_endpoints.clone(),
        ),
        None => {
            let nodes = (0..2 * topo.n_links).map(|i| format!("v{i}")).collect();
            let eps: Vec<(u32, u32)> = (0..topo.n_links as u32)
                .map(|l| (2 * l, 2 * l + 1))
                .collect();
            let path_eps = topo
                .links_of_path
                .iter()
                .map(|ls| {
                    let first = ls.first().unwrap().0;
                    let last = ls.last().unwrap().0;
                    (2 * first, 2 * last + 1)
                })
                .collect();
            (nodes, eps, path_eps)
        }
    };
    TopologyFile {
        nodes,
        links: link_endpoints
            .iter()
            .enumerate()
            .map(|(i, (from, to))| LinkRecord {
                id: i as u32,
                from: *from,
                to: *to,
            })
            .collect(),
        paths: topo
            .links_of_path
            .iter()
            .zip(&path_endpoints)
            .enumerate()
            .map(|(i, (links, (src, dst)))| PathRecord {
                id: i as u32,
                src: *src,
                dst: *dst,
                links: links.iter().map(|l| l.0).collect(),
            })
            .collect(),
    }
}

/// Serializes a topology to the JSON file format as a string.
pub fn topology_to_json(topo: &Topology) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_file_repr(topo))?)
}

// Generator parameters, chosen so nine end nodes yield on the order of 130
// directed links over 72 all-pairs paths.
const INTERNAL_NODES_PER_END: usize = 12;
const MIN_INTERNAL_NODES: usize = 4;
const SHORTCUT_DIVISOR: usize = 6;
/// New internal tree nodes attach uniformly among this many most recent
/// nodes, which stretches the tree instead of letting it collapse around the
/// first few routers.
const TREE_ATTACH_WINDOW: usize = 8;

/// Generates a random topology: a random tree over internal nodes plus
/// shortcut edges, one attachment point per end node, and all-pairs directed
/// shortest paths between end nodes. Pure function of `(n_end_nodes, seed)`.
pub fn generate_random_topology(n_end_nodes: usize, seed: u64) -> Result<Topology> {
    if n_end_nodes < 2 {
        return Err(PabError::Topology(
            "random topology needs at least 2 end nodes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_internal = (INTERNAL_NODES_PER_END * n_end_nodes).max(MIN_INTERNAL_NODES);
    let n_nodes = n_internal + n_end_nodes;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    let add_edge = |adj: &mut Vec<Vec<usize>>, u: usize, v: usize| {
        if u != v && !adj[u].contains(&v) {
            adj[u].push(v);
            adj[v].push(u);
        }
    };
    // Random tree over internal nodes, attachment restricted to a trailing
    // window so the tree has real depth.
    for v in 1..n_internal {
        let lo = v.saturating_sub(TREE_ATTACH_WINDOW);
        let u = rng.gen_range(lo..v);
        add_edge(&mut adj, u, v);
    }
    // Shortcut edges.
    let n_shortcuts = (n_internal / SHORTCUT_DIVISOR).max(1);
    let mut added = 0;
    while added < n_shortcuts {
        let u = rng.gen_range(0..n_internal);
        let v = rng.gen_range(0..n_internal);
        if u != v && !adj[u].contains(&v) {
            add_edge(&mut adj, u, v);
            added += 1;
        }
    }
    // Attach end nodes to distinct internal nodes so their traffic enters the
    // core at spread-out points.
    let mut attach_points: Vec<usize> = (0..n_internal).collect();
    for e in 0..n_end_nodes {
        let attach = if attach_points.is_empty() {
            rng.gen_range(0..n_internal)
        } else {
            let pick = rng.gen_range(0..attach_points.len());
            attach_points.swap_remove(pick)
        };
        add_edge(&mut adj, n_internal + e, attach);
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }

    // All-pairs directed shortest paths between end nodes, BFS with sorted
    // adjacency for deterministic tie-breaking.
    let mut link_ids: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut link_endpoints: Vec<(u32, u32)> = Vec::new();
    let mut paths: Vec<Vec<LinkId>> = Vec::new();
    let mut path_endpoints: Vec<(u32, u32)> = Vec::new();
    for s in 0..n_end_nodes {
        let src = n_internal + s;
        let pred = bfs_predecessors(&adj, src);
        for d in 0..n_end_nodes {
            if s == d {
                continue;
            }
            let dst = n_internal + d;
            let mut nodes = vec![dst];
            let mut cur = dst;
            while cur != src {
                cur = pred[cur].expect("tree construction keeps the graph connected");
                nodes.push(cur);
            }
            nodes.reverse();
            let mut links = Vec::with_capacity(nodes.len() - 1);
            for w in nodes.windows(2) {
                let key = (w[0], w[1]);
                let next_id = link_ids.len() as u32;
                let id = *link_ids.entry(key).or_insert_with(|| {
                    link_endpoints.push((w[0] as u32, w[1] as u32));
                    next_id
                });
                links.push(LinkId(id));
            }
            paths.push(links);
            path_endpoints.push((src as u32, dst as u32));
        }
    }

    let mut topo = Topology::from_paths(link_endpoints.len(), paths)?;
    topo.meta = Some(TopologyMeta {
        nodes: (0..n_nodes)
            .map(|i| {
                if i < n_internal {
                    format!("r{i}")
                } else {
                    format!("h{}", i - n_internal)
                }
            })
            .collect(),
        link_endpoints,
        path_endpoints,
    });
    Ok(topo)
}

fn bfs_predecessors(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut pred = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = std::collections::VecDeque::new();
    seen[src] = true;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                pred[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    pred
}
