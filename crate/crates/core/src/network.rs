//! Ternary dyad storage for partially observed undirected networks.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbmError};

/// State of one unordered dyad: the observed edge value, or `Missing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum DyadState {
    Absent = 0,
    Present = 1,
    Missing = 2,
}

impl DyadState {
    pub fn is_observed(self) -> bool {
        self != DyadState::Missing
    }

    /// Edge value as a float; `None` when missing.
    pub fn value(self) -> Option<f64> {
        match self {
            DyadState::Absent => Some(0.0),
            DyadState::Present => Some(1.0),
            DyadState::Missing => None,
        }
    }

    pub fn from_edge(present: bool) -> Self {
        if present {
            DyadState::Present
        } else {
            DyadState::Absent
        }
    }
}

/// Undirected loop-free network whose dyads are each `Absent`, `Present` or `Missing`.
///
/// Dyads are stored densely in the strict upper triangle, row-major. This encodes
/// the observed edges together with the sampling matrix. Node-centred sampling
/// designs additionally record which nodes were selected; networks read from disk
/// carry no selection and fall back to fully observed rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedNetwork {
    n: usize,
    states: Vec<DyadState>,
    selected: Option<Vec<bool>>,
}

#[inline]
pub(crate) fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl ObservedNetwork {
    /// Network on `n` nodes with every dyad in state `fill`.
    pub fn filled(n: usize, fill: DyadState) -> Self {
        ObservedNetwork {
            n,
            states: vec![fill; n * n.saturating_sub(1) / 2],
            selected: None,
        }
    }

    /// Fully observed network from a symmetric boolean adjacency predicate.
    pub fn from_fn<F: FnMut(usize, usize) -> DyadState>(n: usize, mut f: F) -> Self {
        let mut net = Self::filled(n, DyadState::Absent);
        for i in 0..n {
            for j in (i + 1)..n {
                let k = pair_index(n, i, j);
                net.states[k] = f(i, j);
            }
        }
        net
    }

    /// Fully observed network from a list of undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut net = Self::filled(n, DyadState::Absent);
        for &(i, j) in edges {
            net.set(i, j, DyadState::Present)?;
        }
        Ok(net)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dyad_count(&self) -> usize {
        self.states.len()
    }

    pub fn get(&self, i: usize, j: usize) -> DyadState {
        assert!(i != j, "no self-dyads");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.states[pair_index(self.n, a, b)]
    }

    pub fn set(&mut self, i: usize, j: usize, state: DyadState) -> Result<()> {
        if i == j {
            return Err(SbmError::InvalidParameters(format!("self-dyad ({i}, {i})")));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if b >= self.n {
            return Err(SbmError::InvalidParameters(format!(
                "node {b} out of range for n = {}",
                self.n
            )));
        }
        let k = pair_index(self.n, a, b);
        self.states[k] = state;
        Ok(())
    }

    /// Iterates `(i, j, state)` over all dyads `i < j` in row-major order.
    pub fn dyads(&self) -> impl Iterator<Item = (usize, usize, DyadState)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.states[pair_index(n, i, j)])))
    }

    /// Missing dyads `(i, j)`, `i < j`, in row-major order.
    pub fn missing_dyads(&self) -> Vec<(usize, usize)> {
        self.dyads()
            .filter(|&(_, _, s)| s == DyadState::Missing)
            .map(|(i, j, _)| (i, j))
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.states.iter().filter(|s| s.is_observed()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.dyad_count() - self.observed_count()
    }

    pub fn present_count(&self) -> usize {
        self.states.iter().filter(|&&s| s == DyadState::Present).count()
    }

    /// `|D^o| / |D|`; zero for networks with fewer than two nodes.
    pub fn sampling_rate(&self) -> f64 {
        if self.states.is_empty() {
            0.0
        } else {
            self.observed_count() as f64 / self.dyad_count() as f64
        }
    }

    pub fn is_complete(&self) -> bool {
        self.states.iter().all(|s| s.is_observed())
    }

    /// Observed degree of every node (Present dyads only).
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for (i, j, s) in self.dyads() {
            if s == DyadState::Present {
                d[i] += 1;
                d[j] += 1;
            }
        }
        d
    }

    /// `N^o`: nodes incident to at least one observed dyad.
    pub fn touched_nodes(&self) -> Vec<bool> {
        let mut touched = vec![false; self.n];
        for (i, j, s) in self.dyads() {
            if s.is_observed() {
                touched[i] = true;
                touched[j] = true;
            }
        }
        touched
    }

    /// Nodes whose every dyad is observed.
    pub fn fully_observed_rows(&self) -> Vec<bool> {
        let mut full = vec![true; self.n];
        for (i, j, s) in self.dyads() {
            if !s.is_observed() {
                full[i] = false;
                full[j] = false;
            }
        }
        full
    }

    /// Selected nodes of a node-centred design: the recorded selection when
    /// available, otherwise the fully observed rows.
    pub fn sampled_nodes(&self) -> Vec<bool> {
        match &self.selected {
            Some(sel) => sel.clone(),
            None => self.fully_observed_rows(),
        }
    }

    pub fn recorded_selection(&self) -> Option<&[bool]> {
        self.selected.as_deref()
    }

    pub fn with_selection(mut self, selected: Vec<bool>) -> Result<Self> {
        if selected.len() != self.n {
            return Err(SbmError::DimensionMismatch {
                expected: self.n,
                found: selected.len(),
            });
        }
        self.selected = Some(selected);
        Ok(self)
    }

    pub fn without_selection(mut self) -> Self {
        self.selected = None;
        self
    }

    /// Copy with every dyad observed, taking values from `full` where `self` is missing.
    pub fn reveal(&self, full: &ObservedNetwork) -> Result<ObservedNetwork> {
        if full.n != self.n {
            return Err(SbmError::DimensionMismatch {
                expected: self.n,
                found: full.n,
            });
        }
        let mut out = self.clone();
        for (k, s) in out.states.iter_mut().enumerate() {
            if *s == DyadState::Missing {
                *s = full.states[k];
            }
        }
        Ok(out)
    }

    /// Copy of `full` with dyads masked where `observed(i, j)` is false.
    pub fn masked<F: FnMut(usize, usize) -> bool>(full: &ObservedNetwork, mut observed: F) -> Self {
        let mut out = full.clone();
        out.selected = None;
        let n = full.n;
        for i in 0..n {
            for j in (i + 1)..n {
                if !observed(i, j) {
                    out.states[pair_index(n, i, j)] = DyadState::Missing;
                }
            }
        }
        out
    }
}
