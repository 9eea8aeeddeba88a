use crate::error::Result;
use crate::grid::Cell;

/// A scalar field over grid cells, maximized by the searchers in this crate.
///
/// Any `Fn(Cell) -> f64` closure is an objective. Implement the trait directly
/// when evaluation can fail.
pub trait Objective {
    fn evaluate(&self, cell: Cell) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(Cell) -> f64,
{
    fn evaluate(&self, cell: Cell) -> Result<f64> {
        Ok(self(cell))
    }
}

/// Memoizing wrapper that counts distinct evaluations across several
/// searches over the same objective.
#[derive(Debug)]
pub struct CachedObjective<O> {
    inner: O,
    cache: std::cell::RefCell<std::collections::HashMap<Cell, f64>>,
}

impl<O: Objective> CachedObjective<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: Default::default(),
        }
    }

    /// Distinct cells evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.cache.borrow().len()
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Objective> Objective for CachedObjective<O> {
    fn evaluate(&self, cell: Cell) -> Result<f64> {
        if let Some(&v) = self.cache.borrow().get(&cell) {
            return Ok(v);
        }
        let v = self.inner.evaluate(cell)?;
        self.cache.borrow_mut().insert(cell, v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cached_objective_counts_distinct_cells() {
        let calls = std::cell::Cell::new(0);
        let f = |c: Cell| {
            calls.set(calls.get() + 1);
            c.0 as f64 * 0.5
        };
        let cached = CachedObjective::new(&f);
        assert_eq!(cached.evaluate(Cell(4)).unwrap(), 2.0);
        assert_eq!(cached.evaluate(Cell(4)).unwrap(), 2.0);
        assert_eq!(cached.evaluate(Cell(1)).unwrap(), 0.5);
        assert_eq!(cached.evaluations(), 2);
        assert_eq!(calls.get(), 2);
    }
}
