use std::collections::{BTreeMap, BTreeSet};

use super::{CatalogError, OperatorSpec};

/// Graph of docstrings where an edge `a -> b` means "a's docstring refers to b".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocstringDag {
    nodes: BTreeMap<String, String>,
    edges: BTreeMap<String, Vec<String>>,
}

impl DocstringDag {
    pub fn add_node(&mut self, name: &str, docstring: &str) {
        self.nodes.insert(name.to_string(), docstring.to_string());
    }

    /// Adds `from -> to`. Both endpoints must already exist. Self-references
    /// are rejected here; longer cycles are caught by [`Self::check_acyclic`]
    /// and again during resolution.
    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), CatalogError> {
        if !self.nodes.contains_key(to) {
            return Err(CatalogError::DanglingReference {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        if !self.nodes.contains_key(from) {
            return Err(CatalogError::UnknownOperator(from.to_string()));
        }
        if from == to {
            return Err(CatalogError::CycleDetected(from.to_string()));
        }
        let targets = self.edges.entry(from.to_string()).or_default();
        if !targets.iter().any(|t| t == to) {
            targets.push(to.to_string());
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn docstring(&self, name: &str) -> Option<&str> {
        self.nodes.get(name).map(String::as_str)
    }

    pub fn edges(&self, name: &str) -> &[String] {
        self.edges.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn check_acyclic(&self) -> Result<(), CatalogError> {
        let mut done = BTreeSet::new();
        for start in self.nodes.keys() {
            if !done.contains(start.as_str()) {
                self.visit(start, &mut BTreeSet::new(), &mut done)?;
            }
        }
        Ok(())
    }

    fn visit<'a>(
        &'a self,
        node: &'a str,
        on_stack: &mut BTreeSet<&'a str>,
        done: &mut BTreeSet<&'a str>,
    ) -> Result<(), CatalogError> {
        if done.contains(node) {
            return Ok(());
        }
        if !on_stack.insert(node) {
            return Err(CatalogError::CycleDetected(node.to_string()));
        }
        for next in self.edges(node) {
            if !self.nodes.contains_key(next) {
                return Err(CatalogError::DanglingReference {
                    from: node.to_string(),
                    to: next.clone(),
                });
            }
            self.visit(next, on_stack, done)?;
        }
        on_stack.remove(node);
        done.insert(node);
        Ok(())
    }

    /// The root followed by every transitively referenced node exactly once,
    /// topologically ordered with lexicographic tie-breaking.
    pub fn resolution_order(&self, root: &str) -> Result<Vec<&str>, CatalogError> {
        let Some((root, _)) = self.nodes.get_key_value(root) else {
            return Err(CatalogError::UnknownOperator(root.to_string()));
        };
        let root = root.as_str();
        let mut reachable = BTreeSet::new();
        self.visit(root, &mut BTreeSet::new(), &mut reachable)?;

        let mut indegree: BTreeMap<&str, usize> = reachable.iter().map(|n| (*n, 0)).collect();
        for n in &reachable {
            for t in self.edges(n) {
                *indegree.get_mut(t.as_str()).expect("reachable target") += 1;
            }
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(n, _)| *n)
            .collect();
        let mut order = Vec::with_capacity(reachable.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for t in self.edges(n) {
                let d = indegree.get_mut(t.as_str()).expect("reachable target");
                *d -= 1;
                if *d == 0 {
                    ready.insert(t.as_str());
                }
            }
        }
        if order.len() != reachable.len() {
            return Err(CatalogError::CycleDetected(root.to_string()));
        }
        debug_assert_eq!(order.first().copied(), Some(root));
        Ok(order)
    }

    /// `(name, docstring)` pairs in resolution order.
    pub fn resolve_chain(&self, root: &str) -> Result<Vec<(&str, &str)>, CatalogError> {
        Ok(self
            .resolution_order(root)?
            .into_iter()
            .map(|n| (n, self.nodes[n].as_str()))
            .collect())
    }
}

/// The operator's own docstring followed by every transitively referenced
/// docstring, each exactly once, separated by blank lines.
pub fn resolve_docstrings(op: &OperatorSpec, dag: &DocstringDag) -> Result<String, CatalogError> {
    if !dag.contains(&op.name) {
        return Err(CatalogError::UnknownOperator(op.name.clone()));
    }
    let chain = dag.resolve_chain(&op.name)?;
    Ok(chain
        .into_iter()
        .map(|(_, doc)| doc)
        .collect::<Vec<_>>()
        .join("\n\n"))
}
