//! Estimating-function abstractions.
//!
//! An [`EstimatorSpec`] turns one independent unit of data into a [`UnitPsi`],
//! a pure map θ ↦ ψ(Oᵢ, θ). The M-estimator is the root of
//! G(θ) = Σᵢ ψ(Oᵢ, θ); [`EstimatingSystem`] holds the built per-unit maps for
//! one partition so they can be evaluated repeatedly without rebuilding.
//!
//! θ positions are 0-based everywhere, including the JSON reports.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Parameter vector θ. Non-empty, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("parameter vector must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "parameter vector entry {i} is not finite"
            )));
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(p: usize) -> Result<Self> {
        ParameterVector::new(vec![0.0; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One independent unit Oᵢ: a row, or a cluster of rows sharing a key.
#[derive(Debug, Clone, PartialEq)]
pub struct DataUnit {
    id: String,
    rows: Dataset,
}

impl DataUnit {
    pub fn new(id: impl Into<String>, rows: Dataset) -> Result<Self> {
        let id = id.into();
        if rows.n_rows() == 0 {
            return Err(Error::Argument(format!("unit `{id}` has no rows")));
        }
        Ok(DataUnit { id, rows })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rows(&self) -> &Dataset {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.n_rows()
    }

    pub fn real(&self, column: &str) -> Result<&[f64]> {
        self.rows.real(column)
    }
}

/// The dataset split into m ≥ 1 independent units, in deterministic order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPartition {
    units: Vec<DataUnit>,
}

impl UnitPartition {
    pub fn new(units: Vec<DataUnit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Argument("partition must contain at least one unit".into()));
        }
        let names = units[0].rows.names();
        if units.iter().any(|u| u.rows.names() != names) {
            return Err(Error::Argument("units do not share a column schema".into()));
        }
        Ok(UnitPartition { units })
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[DataUnit] {
        &self.units
    }

    /// Rows of all units concatenated in unit order.
    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::concat(self.units.iter().map(|u| &u.rows))
    }
}

type PsiFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type BlockBuilder = dyn Fn(&DataUnit) -> Result<UnitPsi> + Send + Sync;
type RowBuilder = dyn Fn(&DataUnit, usize) -> Result<UnitPsi> + Send + Sync;
type Validator = dyn Fn(&UnitPartition) -> Result<()> + Send + Sync;
type Diagnoser = dyn Fn(&UnitPartition, &[f64]) -> Vec<String> + Send + Sync;

/// ψ(Oᵢ, ·) for one unit. Reads `n_inputs` parameters and returns
/// `n_outputs` values; for a complete system the two are equal.
#[derive(Clone)]
pub struct UnitPsi {
    n_inputs: usize,
    n_outputs: usize,
    f: Arc<PsiFn>,
}

impl std::fmt::Debug for UnitPsi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitPsi")
            .field("n_inputs", &self.n_inputs)
            .field("n_outputs", &self.n_outputs)
            .finish()
    }
}

impl UnitPsi {
    pub fn new<F>(p: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        UnitPsi::partial(p, p, f)
    }

    pub fn partial<F>(n_inputs: usize, n_outputs: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        UnitPsi {
            n_inputs,
            n_outputs,
            f: Arc::new(f),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.n_inputs);
        (self.f)(theta)
    }

    fn summed(parts: Vec<UnitPsi>, n_inputs: usize, n_outputs: usize) -> UnitPsi {
        UnitPsi::partial(n_inputs, n_outputs, move |theta| {
            let mut acc = vec![0.0; n_outputs];
            for part in &parts {
                let v = part.eval(theta);
                if v.len() != n_outputs {
                    // surfaced as a contract violation by the caller
                    return v;
                }
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            acc
        })
    }
}

/// Whether a spec consumes a whole unit at once (GEE-style clusters) or
/// contributes per row, with row contributions summed within the unit.
#[derive(Clone)]
enum Builder {
    Block(Arc<BlockBuilder>),
    Rowwise(Arc<RowBuilder>),
}

/// Builder for per-unit estimating functions.
///
/// Fixed outer arguments (column names, model configuration) are captured by
/// the builder when the spec is constructed; fixed inner arguments (GEE's α
/// and φ, for example) are captured by the returned [`UnitPsi`].
#[derive(Clone)]
pub struct EstimatorSpec {
    name: String,
    n_inputs: usize,
    n_outputs: usize,
    builder: Builder,
    validators: Vec<Arc<Validator>>,
    diagnosers: Vec<(Range<usize>, Arc<Diagnoser>)>,
}

impl std::fmt::Debug for EstimatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EstimatorSpec")
            .field("name", &self.name)
            .field("n_inputs", &self.n_inputs)
            .field("n_outputs", &self.n_outputs)
            .finish()
    }
}

impl EstimatorSpec {
    /// Spec whose builder consumes the whole unit.
    pub fn block<F>(name: impl Into<String>, p: usize, build: F) -> Self
    where
        F: Fn(&DataUnit) -> Result<UnitPsi> + Send + Sync + 'static,
    {
        EstimatorSpec::partial_block(name, p, p, build)
    }

    /// Spec built per row; a multi-row unit sums its rows' contributions.
    pub fn rowwise<F>(name: impl Into<String>, p: usize, build: F) -> Self
    where
        F: Fn(&DataUnit, usize) -> Result<UnitPsi> + Send + Sync + 'static,
    {
        EstimatorSpec::partial_rowwise(name, p, p, build)
    }

    /// Block spec reading `n_inputs` parameters and producing `n_outputs`
    /// equations. Only usable as a piece of a stack.
    pub fn partial_block<F>(name: impl Into<String>, n_inputs: usize, n_outputs: usize, build: F) -> Self
    where
        F: Fn(&DataUnit) -> Result<UnitPsi> + Send + Sync + 'static,
    {
        EstimatorSpec {
            name: name.into(),
            n_inputs,
            n_outputs,
            builder: Builder::Block(Arc::new(build)),
            validators: Vec::new(),
            diagnosers: Vec::new(),
        }
    }

    pub fn partial_rowwise<F>(
        name: impl Into<String>,
        n_inputs: usize,
        n_outputs: usize,
        build: F,
    ) -> Self
    where
        F: Fn(&DataUnit, usize) -> Result<UnitPsi> + Send + Sync + 'static,
    {
        EstimatorSpec {
            name: name.into(),
            n_inputs,
            n_outputs,
            builder: Builder::Rowwise(Arc::new(build)),
            validators: Vec::new(),
            diagnosers: Vec::new(),
        }
    }

    /// Adds a whole-partition precondition checked before estimation.
    pub fn with_validator<F>(mut self, f: F) -> Self
    where
        F: Fn(&UnitPartition) -> Result<()> + Send + Sync + 'static,
    {
        self.validators.push(Arc::new(f));
        self
    }

    /// Adds a check run at θ̂ that may emit warnings.
    pub fn with_diagnostics<F>(mut self, f: F) -> Self
    where
        F: Fn(&UnitPartition, &[f64]) -> Vec<String> + Send + Sync + 'static,
    {
        let all = 0..self.n_inputs;
        self.diagnosers.push((all, Arc::new(f)));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of estimating equations (and parameters, for a complete system).
    pub fn p(&self) -> usize {
        self.n_outputs
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn is_square(&self) -> bool {
        self.n_inputs == self.n_outputs
    }

    pub fn is_rowwise(&self) -> bool {
        matches!(self.builder, Builder::Rowwise(_))
    }

    pub fn validate(&self, partition: &UnitPartition) -> Result<()> {
        self.validators.iter().try_for_each(|v| v(partition))
    }

    pub fn diagnose(&self, partition: &UnitPartition, theta: &[f64]) -> Vec<String> {
        self.diagnosers
            .iter()
            .flat_map(|(range, d)| d(partition, &theta[range.clone()]))
            .collect()
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "spec `{}` reads {} parameters but returns {} equations",
                self.name, self.n_inputs, self.n_outputs
            )))
        }
    }
}

/// Builds ψ(Oᵢ, ·) for one unit without evaluating it.
pub fn build_unit_psi(spec: &EstimatorSpec, unit: &DataUnit) -> Result<UnitPsi> {
    match &spec.builder {
        Builder::Block(build) => build(unit),
        Builder::Rowwise(build) => {
            if unit.n_rows() == 1 {
                return build(unit, 0);
            }
            let parts = (0..unit.n_rows())
                .map(|r| build(unit, r))
                .collect::<Result<Vec<_>>>()?;
            Ok(UnitPsi::summed(parts, spec.n_inputs, spec.n_outputs))
        }
    }
}

/// G(θ) = Σᵢ ψ(Oᵢ, θ).
pub fn sum_psi(
    spec: &EstimatorSpec,
    partition: &UnitPartition,
    theta: &ParameterVector,
) -> Result<Vec<f64>> {
    EstimatingSystem::build(spec, partition)?.sum(theta)
}

/// The per-unit estimating functions of one spec over one partition.
#[derive(Clone)]
pub struct EstimatingSystem {
    p: usize,
    units: Vec<UnitPsi>,
}

impl EstimatingSystem {
    pub fn build(spec: &EstimatorSpec, partition: &UnitPartition) -> Result<Self> {
        spec.require_square()?;
        let units = partition
            .units()
            .iter()
            .map(|u| build_unit_psi(spec, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimatingSystem { p: spec.p(), units })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, i: usize) -> &UnitPsi {
        &self.units[i]
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.p {
            return Err(Error::Argument(format!(
                "theta has length {}, expected {}",
                theta.len(),
                self.p
            )));
        }
        Ok(())
    }

    /// ψ(Oᵢ, θ) for every unit, in unit order. Units may be evaluated
    /// concurrently.
    pub fn per_unit(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        let values: Vec<Vec<f64>> = self.units.par_iter().map(|u| u.eval(theta)).collect();
        for (i, v) in values.iter().enumerate() {
            if v.len() != self.p {
                return Err(Error::Contract {
                    unit: i,
                    expected: self.p,
                    got: v.len(),
                });
            }
        }
        Ok(values)
    }

    /// G(θ), summed in unit order.
    pub fn sum(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let values = self.per_unit(theta)?;
        let mut acc = vec![0.0; self.p];
        for v in values {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        Ok(acc)
    }
}

/// One piece of a stacked system: `spec` reads `theta[inputs]` and writes
/// `psi[outputs]`.
#[derive(Clone, Debug)]
pub struct StackBlock {
    pub spec: EstimatorSpec,
    pub outputs: Range<usize>,
    pub inputs: Range<usize>,
}

impl StackBlock {
    /// Block that reads exactly the slice it writes.
    pub fn own(spec: EstimatorSpec, range: Range<usize>) -> Self {
        StackBlock {
            spec,
            inputs: range.clone(),
            outputs: range,
        }
    }
}

/// Stacks square specs; spec k sees only `theta[layout[k]]`.
pub fn stack(specs: Vec<EstimatorSpec>, layout: &[Range<usize>]) -> Result<EstimatorSpec> {
    if specs.len() != layout.len() {
        return Err(Error::Layout(format!(
            "{} specs but {} layout ranges",
            specs.len(),
            layout.len()
        )));
    }
    let blocks = specs
        .into_iter()
        .zip(layout.iter().cloned())
        .map(|(s, r)| {
            s.require_square().map_err(|e| Error::Layout(e.to_string()))?;
            Ok(StackBlock::own(s, r))
        })
        .collect::<Result<Vec<_>>>()?;
    stack_blocks("stack", blocks)
}

/// Stacks blocks whose output ranges tile `0..P` and whose input ranges lie
/// within `0..P`. The result is a square spec of dimension P.
pub fn stack_blocks(name: impl Into<String>, blocks: Vec<StackBlock>) -> Result<EstimatorSpec> {
    if blocks.is_empty() {
        return Err(Error::Layout("no blocks to stack".into()));
    }
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&k| blocks[k].outputs.start);
    let mut next = 0;
    for &k in &order {
        let r = &blocks[k].outputs;
        if r.start != next {
            let what = if r.start < next { "overlaps" } else { "leaves a gap before" };
            return Err(Error::Layout(format!("output range {r:?} {what} position {next}")));
        }
        if r.end <= r.start {
            return Err(Error::Layout(format!("output range {r:?} is empty")));
        }
        next = r.end;
    }
    let total = next;
    for b in &blocks {
        if b.outputs.len() != b.spec.p() {
            return Err(Error::Layout(format!(
                "spec `{}` returns {} equations but is assigned {:?}",
                b.spec.name(),
                b.spec.p(),
                b.outputs
            )));
        }
        if b.inputs.len() != b.spec.n_inputs() || b.inputs.end > total {
            return Err(Error::Layout(format!(
                "spec `{}` reads {} parameters but is given {:?} of 0..{total}",
                b.spec.name(),
                b.spec.n_inputs(),
                b.inputs
            )));
        }
    }

    let mut validators = Vec::new();
    let mut diagnosers = Vec::new();
    for b in &blocks {
        validators.extend(b.spec.validators.iter().cloned());
        for (range, d) in &b.spec.diagnosers {
            let shifted = b.inputs.start + range.start..b.inputs.start + range.end;
            diagnosers.push((shifted, d.clone()));
        }
    }

    let pieces: Arc<Vec<StackBlock>> = Arc::new(blocks);
    let mut spec = EstimatorSpec::block(name, total, move |unit| {
        let built = pieces
            .iter()
            .map(|b| Ok((build_unit_psi(&b.spec, unit)?, b.inputs.clone(), b.outputs.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitPsi::new(total, move |theta| {
            let mut out = vec![0.0; total];
            for (psi, inputs, outputs) in &built {
                let v = psi.eval(&theta[inputs.clone()]);
                if v.len() != outputs.len() {
                    return v;
                }
                out[outputs.clone()].copy_from_slice(&v);
            }
            out
        }))
    });
    spec.validators = validators;
    spec.diagnosers = diagnosers;
    Ok(spec)
}
