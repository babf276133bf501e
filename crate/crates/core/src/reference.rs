//! Pointer-based reference octree.
//!
//! This is the textbook recursive OctoMap update, kept deliberately plain so it
//! can serve as the ground truth for the banked engine. It shares only the
//! scalar primitives (keys, log-odds arithmetic, classification) with it.

use crate::config::{MapConfig, TREE_DEPTH};
use crate::key::VoxelKey;
use crate::logodds::LogOdds;
use crate::occupancy::{classify, Occupancy, UpdateKind, VoxelUpdate};

type Children = Box<[Option<RefNode>; 8]>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefNode {
    pub value: LogOdds,
    pub children: Option<Children>,
}

impl RefNode {
    fn leaf(value: LogOdds) -> Self {
        RefNode { value, children: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    fn count(&self) -> usize {
        self.children
            .iter()
            .flat_map(|c| c.iter().flatten())
            .map(|c| 1 + c.count())
            .sum()
    }
}

fn collapsible(children: &[Option<RefNode>; 8]) -> Option<LogOdds> {
    let first = children[0].as_ref()?;
    if !first.is_leaf() {
        return None;
    }
    for c in &children[1..] {
        match c {
            Some(c) if c.is_leaf() && c.value == first.value => {}
            _ => return None,
        }
    }
    Some(first.value)
}

fn max_child(children: &[Option<RefNode>; 8]) -> Option<LogOdds> {
    children.iter().flatten().map(|c| c.value).max()
}

/// Octree rooted at depth 0. The root itself is never pruned.
#[derive(Clone, Debug, PartialEq)]
pub struct RefOctree {
    cfg: MapConfig,
    root: Option<RefNode>,
}

impl RefOctree {
    pub fn new(cfg: MapConfig) -> Self {
        RefOctree { cfg, root: None }
    }

    pub fn config(&self) -> &MapConfig {
        &self.cfg
    }

    pub fn root(&self) -> Option<&RefNode> {
        self.root.as_ref()
    }

    /// Deepest stored node on the path to `key`, with its depth.
    fn search(&self, key: VoxelKey) -> Option<(&RefNode, u8)> {
        let mut node = self.root.as_ref()?;
        let mut depth = 0;
        while depth < TREE_DEPTH {
            let Some(children) = &node.children else { break };
            node = children[key.child_index_unchecked(depth + 1) as usize].as_ref()?;
            depth += 1;
        }
        Some((node, depth))
    }

    pub fn update(&mut self, update: VoxelUpdate) {
        if let Some((node, _)) = self.search(update.key) {
            if node.is_leaf() && self.cfg.is_saturated(node.value, update.kind) {
                return;
            }
        }
        let created = self.root.is_none();
        let root = self.root.get_or_insert_with(|| RefNode::leaf(LogOdds::ZERO));
        update_recursive(&self.cfg, root, update.key, update.kind, 0, created);
    }

    /// Leaf value covering `key`, if any.
    pub fn value(&self, key: VoxelKey) -> Option<LogOdds> {
        match self.search(key) {
            Some((node, _)) if node.is_leaf() => Some(node.value),
            _ => None,
        }
    }

    pub fn query(&self, key: VoxelKey) -> Occupancy {
        classify(self.value(key), &self.cfg)
    }

    /// Stored nodes, root excluded.
    pub fn node_count(&self) -> usize {
        self.root.as_ref().map_or(0, RefNode::count)
    }

    /// Structural violations: inner values that are not the max of their
    /// children, empty child arrays, and collapsible sibling groups.
    pub fn audit(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(root) = &self.root {
            audit_node(&self.cfg, root, 0, &mut out);
        }
        out
    }
}

fn update_recursive(
    cfg: &MapConfig,
    node: &mut RefNode,
    key: VoxelKey,
    kind: UpdateKind,
    depth: u8,
    created: bool,
) {
    if depth == TREE_DEPTH {
        node.value = cfg.saturating_add(node.value, cfg.delta(kind));
        return;
    }
    if node.children.is_none() && !created {
        // expand a pruned leaf: every child inherits its value
        let v = node.value;
        node.children = Some(Box::new(std::array::from_fn(|_| Some(RefNode::leaf(v)))));
    }
    let children = node.children.get_or_insert_with(Box::default);
    let slot = &mut children[key.child_index_unchecked(depth + 1) as usize];
    let child_created = slot.is_none();
    let child = slot.get_or_insert_with(|| RefNode::leaf(LogOdds::ZERO));
    update_recursive(cfg, child, key, kind, depth + 1, child_created);

    if depth > 0 && cfg.prune {
        if let Some(v) = collapsible(children) {
            node.value = v;
            node.children = None;
            return;
        }
    }
    node.value = max_child(children).expect("path child is present");
}

fn audit_node(cfg: &MapConfig, node: &RefNode, depth: u8, out: &mut Vec<String>) {
    let Some(children) = &node.children else { return };
    if depth == TREE_DEPTH {
        out.push("leaf-depth node has children".into());
        return;
    }
    match max_child(children) {
        None => out.push(format!("inner node at depth {depth} has no children")),
        Some(m) if m != node.value => out.push(format!(
            "depth {depth}: value {} but max child {}",
            node.value.raw(),
            m.raw()
        )),
        _ => {}
    }
    if depth > 0 && cfg.prune && collapsible(children).is_some() {
        out.push(format!("depth {depth}: collapsible children left unpruned"));
    }
    for c in children.iter().flatten() {
        audit_node(cfg, c, depth + 1, out);
    }
}
