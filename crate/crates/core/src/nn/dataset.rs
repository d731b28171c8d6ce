use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-aligned input voltages and target concentrations (mmol/L).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    inputs: Array2<S>,
    targets: Array2<S>,
}

impl<S: Scalar> Dataset<S> {
    /// Keeps only rows whose every target is at least `floor`.
    pub fn new(inputs: Array2<S>, targets: Array2<S>, floor: S) -> Result<Self> {
        check_aligned(&inputs, &targets)?;
        let keep: Vec<usize> = targets
            .rows()
            .into_iter()
            .enumerate()
            .filter(|(_, row)| row.iter().all(|c| *c >= floor))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::domain(format!(
                "no rows have every target concentration >= {floor}"
            )));
        }
        Ok(Dataset {
            inputs: inputs.select(Axis(0), &keep),
            targets: targets.select(Axis(0), &keep),
        })
    }

    /// Wraps already-filtered data.
    pub fn from_parts(inputs: Array2<S>, targets: Array2<S>) -> Result<Self> {
        check_aligned(&inputs, &targets)?;
        if inputs.nrows() == 0 {
            return Err(Error::domain("dataset must contain at least one row"));
        }
        Ok(Dataset {
            inputs: inputs.as_standard_layout().into_owned(),
            targets: targets.as_standard_layout().into_owned(),
        })
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(inputs: Array2<S>, targets: Array2<S>) -> Self {
        Dataset { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn inputs(&self) -> ArrayView2<'_, S> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView2<'_, S> {
        self.targets.view()
    }

    #[cfg(test)]
    pub(crate) fn inputs_mut(&mut self) -> ndarray::ArrayViewMut2<'_, S> {
        self.inputs.view_mut()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(bad) = indices.iter().find(|i| **i >= self.len()) {
            return Err(Error::domain(format!("row index {bad} out of range")));
        }
        Dataset::from_parts(
            self.inputs.select(Axis(0), indices),
            self.targets.select(Axis(0), indices),
        )
    }
}

fn check_aligned<S>(inputs: &Array2<S>, targets: &Array2<S>) -> Result<()> {
    if inputs.nrows() != targets.nrows() {
        return Err(Error::domain(format!(
            "{} input rows but {} target rows",
            inputs.nrows(),
            targets.nrows()
        )));
    }
    Ok(())
}
