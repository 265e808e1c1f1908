//! Prefix-coded sector hierarchy (NAICS-style).
//!
//! A taxonomy file holds one JSON object per line:
//!
//! ```text
//! {"code": "311", "level": 3, "title": "Food Manufacturing", "description": "...", "parent": "31-33"}
//! ```
//!
//! `parent` is optional. When it is absent the parent is the longest strictly
//! shorter code that prefixes the node's code. Range sectors such as `31-33`
//! cannot be reached by the prefix rule, so their children name them
//! explicitly. Lines starting with `#` and blank lines are skipped.
//!
//! Levels are whatever the file declares (2/3/6 for the usual NAICS cut). A
//! child must sit on the declared level directly after its parent's, which
//! keeps the depth of the tree equal to the number of declared levels.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code of the synthetic root. Real codes are never empty.
pub const ROOT: &str = "";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub code: String,
    pub level: u32,
    pub title: String,
    pub description: String,
    #[serde(rename = "parent", default, skip_serializing_if = "Option::is_none")]
    pub parent_code: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: BTreeMap<String, TaxonomyNode>,
    levels: Vec<u32>,
    children_index: HashMap<String, Vec<String>>,
}

impl Taxonomy {
    /// Parses line-delimited JSON records.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut nodes = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let node: TaxonomyNode =
                serde_json::from_str(trimmed).map_err(|e| Error::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if node.code.is_empty() {
                return Err(Error::MalformedRecord {
                    line: line_no,
                    reason: "empty code".into(),
                });
            }
            nodes.push((line_no, node));
        }
        Self::build(nodes)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::parse(text.as_bytes())
    }

    pub fn from_nodes(nodes: impl IntoIterator<Item = TaxonomyNode>) -> Result<Self> {
        Self::build(nodes.into_iter().enumerate().map(|(i, n)| (i + 1, n)).collect())
    }

    fn build(records: Vec<(usize, TaxonomyNode)>) -> Result<Self> {
        let mut nodes: BTreeMap<String, TaxonomyNode> = BTreeMap::new();
        let mut first_line: HashMap<String, usize> = HashMap::new();
        for (line, node) in records {
            if let Some(&first) = first_line.get(&node.code) {
                return Err(Error::DuplicateCode {
                    code: node.code,
                    first,
                    second: line,
                });
            }
            first_line.insert(node.code.clone(), line);
            nodes.insert(node.code.clone(), node);
        }

        let mut levels: Vec<u32> = nodes.values().map(|n| n.level).collect();
        levels.sort_unstable();
        levels.dedup();
        let Some(&top_level) = levels.first() else {
            return Err(Error::Empty("taxonomy"));
        };

        let mut resolved: Vec<(String, Option<String>)> = Vec::with_capacity(nodes.len());
        for node in nodes.values() {
            let parent = match &node.parent_code {
                Some(p) => {
                    if !nodes.contains_key(p) {
                        return Err(Error::OrphanNode {
                            code: node.code.clone(),
                        });
                    }
                    Some(p.clone())
                }
                None if node.level == top_level => None,
                None => Some(prefix_parent(&node.code, &nodes).ok_or_else(|| {
                    Error::OrphanNode {
                        code: node.code.clone(),
                    }
                })?),
            };
            resolved.push((node.code.clone(), parent));
        }

        let mut children_index: HashMap<String, Vec<String>> = HashMap::new();
        children_index.insert(ROOT.to_string(), Vec::new());
        for (code, parent) in resolved {
            let level = nodes[&code].level;
            if let Some(parent) = &parent {
                let parent_level = nodes[parent].level;
                let pos = levels.binary_search(&level).expect("level collected above");
                if pos == 0 || levels[pos - 1] != parent_level {
                    return Err(Error::LevelInconsistent {
                        code,
                        level,
                        parent: parent.clone(),
                        parent_level,
                    });
                }
            }
            let key = parent.clone().unwrap_or_else(|| ROOT.to_string());
            children_index.entry(key).or_default().push(code.clone());
            nodes.get_mut(&code).expect("present").parent_code = parent;
        }
        for list in children_index.values_mut() {
            list.sort();
        }

        Ok(Self {
            nodes,
            levels,
            children_index,
        })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Number of declared levels.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, code: &str) -> Result<&TaxonomyNode> {
        self.nodes
            .get(code)
            .ok_or_else(|| Error::UnknownCode(code.to_string()))
    }

    pub fn contains(&self, code: &str) -> bool {
        self.nodes.contains_key(code)
    }

    /// All nodes in ascending code order.
    pub fn nodes(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values()
    }

    pub fn nodes_at_level(&self, level: u32) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values().filter(move |n| n.level == level)
    }

    /// Nodes without children, in ascending code order.
    pub fn leaves(&self) -> impl Iterator<Item = &TaxonomyNode> {
        self.nodes.values().filter(|n| self.is_leaf(&n.code))
    }

    pub fn is_leaf(&self, code: &str) -> bool {
        self.children_index.get(code).is_none_or(Vec::is_empty)
    }

    /// Child codes in ascending order. `ROOT` yields the top-level nodes.
    pub fn child_codes(&self, code: &str) -> Result<&[String]> {
        if code != ROOT && !self.nodes.contains_key(code) {
            return Err(Error::UnknownCode(code.to_string()));
        }
        Ok(self
            .children_index
            .get(code)
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    pub fn children(&self, code: &str) -> Result<Vec<&TaxonomyNode>> {
        Ok(self
            .child_codes(code)?
            .iter()
            .map(|c| &self.nodes[c])
            .collect())
    }

    pub fn parent(&self, code: &str) -> Result<Option<&str>> {
        Ok(self.node(code)?.parent_code.as_deref())
    }

    /// Ancestor chain, leaf first, ending at a child of the root.
    pub fn path_to_root(&self, code: &str) -> Result<Vec<String>> {
        let mut path = vec![self.node(code)?.code.clone()];
        let mut cur = code;
        while let Some(parent) = self.nodes[cur].parent_code.as_deref() {
            path.push(parent.to_string());
            cur = parent;
        }
        Ok(path)
    }

    /// The ancestor of `code` (or `code` itself) that sits on `level`.
    pub fn ancestor_at_level(&self, code: &str, level: u32) -> Result<Option<String>> {
        Ok(self
            .path_to_root(code)?
            .into_iter()
            .find(|c| self.nodes[c].level == level))
    }

    /// Largest number of children under any single node, root included.
    pub fn max_branching(&self) -> usize {
        self.children_index.values().map(Vec::len).max().unwrap_or(0)
    }

    /// Largest number of nodes on any declared level.
    pub fn max_level_width(&self) -> usize {
        self.levels
            .iter()
            .map(|&l| self.nodes_at_level(l).count())
            .max()
            .unwrap_or(0)
    }

    /// Writes the taxonomy in the line-delimited format, parents made explicit.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for node in self.nodes.values() {
            serde_json::to_writer(&mut w, node)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn prefix_parent(code: &str, nodes: &BTreeMap<String, TaxonomyNode>) -> Option<String> {
    code.char_indices()
        .map(|(i, _)| i)
        .filter(|&i| i > 0)
        .rev()
        .map(|i| &code[..i])
        .find(|prefix| nodes.contains_key(*prefix))
        .map(str::to_string)
}
