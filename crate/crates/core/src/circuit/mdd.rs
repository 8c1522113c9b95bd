//! Quasi-reduced multi-valued decision diagrams.
//!
//! Every path from a root visits every level exactly once, which keeps the
//! arithmetic circuits exported from these diagrams smooth without extra
//! smoothing gates. Nodes are hash-consed, so equal functions share a node
//! and the diagram for a fixed variable order is canonical.

use std::collections::HashMap;

pub(crate) type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    And,
    Or,
}

pub(crate) struct Mdd {
    arities: Vec<usize>,
    levels: Vec<u32>,
    child_start: Vec<u32>,
    child_pool: Vec<NodeId>,
    unique: HashMap<(u32, Box<[NodeId]>), NodeId>,
    apply_memo: HashMap<(Op, NodeId, NodeId), NodeId>,
    not_memo: HashMap<NodeId, NodeId>,
    true_at: Vec<NodeId>,
    false_at: Vec<NodeId>,
    max_nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BudgetExceeded;

impl Mdd {
    pub(crate) const FALSE: NodeId = 0;
    pub(crate) const TRUE: NodeId = 1;

    pub(crate) fn new(arities: Vec<usize>, max_nodes: usize) -> Result<Self, BudgetExceeded> {
        let n = arities.len() as u32;
        let mut m = Mdd {
            arities,
            levels: vec![n, n],
            child_start: vec![0, 0, 0],
            child_pool: Vec::new(),
            unique: HashMap::new(),
            apply_memo: HashMap::new(),
            not_memo: HashMap::new(),
            true_at: Vec::new(),
            false_at: Vec::new(),
            max_nodes,
        };
        let nl = m.arities.len();
        let mut t = vec![Self::TRUE; nl + 1];
        let mut f = vec![Self::FALSE; nl + 1];
        for l in (0..nl).rev() {
            let k = m.arities[l];
            t[l] = m.mk(l as u32, &vec![t[l + 1]; k])?;
            f[l] = m.mk(l as u32, &vec![f[l + 1]; k])?;
        }
        m.true_at = t;
        m.false_at = f;
        Ok(m)
    }

    pub(crate) fn num_levels(&self) -> usize {
        self.arities.len()
    }

    pub(crate) fn level(&self, n: NodeId) -> usize {
        self.levels[n as usize] as usize
    }

    pub(crate) fn children(&self, n: NodeId) -> &[NodeId] {
        let (a, b) = (
            self.child_start[n as usize] as usize,
            self.child_start[n as usize + 1] as usize,
        );
        &self.child_pool[a..b]
    }

    pub(crate) fn is_false(&self, n: NodeId) -> bool {
        self.false_at[self.level(n)] == n
    }

    #[cfg(test)]
    pub(crate) fn is_true(&self, n: NodeId) -> bool {
        self.true_at[self.level(n)] == n
    }

    pub(crate) fn constant(&self, value: bool) -> NodeId {
        if value {
            self.true_at[0]
        } else {
            self.false_at[0]
        }
    }

    fn mk(&mut self, level: u32, children: &[NodeId]) -> Result<NodeId, BudgetExceeded> {
        if let Some(&id) = self.unique.get(&(level, children.into())) {
            return Ok(id);
        }
        if self.levels.len() >= self.max_nodes {
            return Err(BudgetExceeded);
        }
        let id = self.levels.len() as NodeId;
        self.levels.push(level);
        self.child_pool.extend_from_slice(children);
        self.child_start.push(self.child_pool.len() as u32);
        self.unique.insert((level, children.into()), id);
        Ok(id)
    }

    /// Indicator of `var == value`, rooted at level 0.
    pub(crate) fn literal(&mut self, var: usize, value: usize) -> Result<NodeId, BudgetExceeded> {
        let k = self.arities[var];
        let mut kids = vec![self.false_at[var + 1]; k];
        kids[value] = self.true_at[var + 1];
        let mut node = self.mk(var as u32, &kids)?;
        for l in (0..var).rev() {
            node = self.mk(l as u32, &vec![node; self.arities[l]])?;
        }
        Ok(node)
    }

    pub(crate) fn and(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, BudgetExceeded> {
        self.apply(Op::And, a, b)
    }

    pub(crate) fn or(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, BudgetExceeded> {
        self.apply(Op::Or, a, b)
    }

    fn apply(&mut self, op: Op, a: NodeId, b: NodeId) -> Result<NodeId, BudgetExceeded> {
        debug_assert_eq!(self.level(a), self.level(b));
        let l = self.level(a);
        let (t, f) = (self.true_at[l], self.false_at[l]);
        match op {
            Op::And => {
                if a == f || b == f {
                    return Ok(f);
                }
                if a == t {
                    return Ok(b);
                }
                if b == t || a == b {
                    return Ok(a);
                }
            }
            Op::Or => {
                if a == t || b == t {
                    return Ok(t);
                }
                if a == f {
                    return Ok(b);
                }
                if b == f || a == b {
                    return Ok(a);
                }
            }
        }
        let key = (op, a.min(b), a.max(b));
        if let Some(&r) = self.apply_memo.get(&key) {
            return Ok(r);
        }
        let (ca, cb) = (self.children(a).to_vec(), self.children(b).to_vec());
        let mut kids = Vec::with_capacity(ca.len());
        for (x, y) in ca.into_iter().zip(cb) {
            kids.push(self.apply(op, x, y)?);
        }
        let r = self.mk(l as u32, &kids)?;
        self.apply_memo.insert(key, r);
        Ok(r)
    }

    pub(crate) fn not(&mut self, a: NodeId) -> Result<NodeId, BudgetExceeded> {
        let l = self.level(a);
        if l == self.num_levels() {
            return Ok(if a == Self::TRUE { Self::FALSE } else { Self::TRUE });
        }
        if let Some(&r) = self.not_memo.get(&a) {
            return Ok(r);
        }
        let kids = self.children(a).to_vec();
        let mut out = Vec::with_capacity(kids.len());
        for c in kids {
            out.push(self.not(c)?);
        }
        let r = self.mk(l as u32, &out)?;
        self.not_memo.insert(a, r);
        Ok(r)
    }

    pub(crate) fn len(&self) -> usize {
        self.levels.len()
    }
}
