//! Central-difference gradient checking.

use crate::scalar::Scalar;
use crate::store::{Bind, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{NumError, Tensor};

/// Step size used throughout the workspace's checks.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Closure that builds a scalar loss on a fresh tape from the watched params.
pub trait LossBuilder<T: Scalar>:
    for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>, NumError>
{
}

impl<T: Scalar, F> LossBuilder<T> for F where
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>, NumError>
{
}

fn eval_loss<T: Scalar>(params: &[Tensor<T>], build: &impl LossBuilder<T>) -> Result<T, NumError> {
    let tape = Tape::new();
    let vars: Vec<Var<'_, T>> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let loss = build(&tape, &vars)?;
    let v = loss.value().item()?;
    if !v.is_finite() {
        return Err(NumError::NonFinite { op: "gradient_check" });
    }
    Ok(v)
}

/// Maximum relative error between the tape's gradients and central
/// differences over every entry of every parameter:
/// `|analytic - fd| / max(|analytic|, |fd|, 1e-8)`.
///
/// The loss must be smooth at the evaluation point; rejects non-finite losses.
pub fn gradient_check<T: Scalar>(
    params: &[Tensor<T>],
    eps: T,
    build: impl LossBuilder<T>,
) -> Result<T, NumError> {
    let tape = Tape::new();
    let vars: Vec<Var<'_, T>> = params.iter().map(|p| tape.trainable(p.clone())).collect();
    let loss = build(&tape, &vars)?;
    if !loss.value().item()?.is_finite() {
        return Err(NumError::NonFinite { op: "gradient_check" });
    }
    tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let floor = T::from_f64_lossy(1e-8);
    let two = T::from_f64_lossy(2.0);
    let mut worst = T::zero();
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for pi in 0..params.len() {
        for k in 0..params[pi].len() {
            let original = work[pi].data()[k];
            work[pi].data_mut()[k] = original + eps;
            let plus = eval_loss(&work, &build)?;
            work[pi].data_mut()[k] = original - eps;
            let minus = eval_loss(&work, &build)?;
            work[pi].data_mut()[k] = original;
            let fd = (plus - minus) / (two * eps);
            let a = analytic[pi].data()[k];
            let denom = a.abs().max(fd.abs()).max(floor);
            let rel = (a - fd).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

/// Runs one forward pass and reports the smallest |input| any relu saw, so
/// callers can honor the smoothness precondition before checking gradients.
pub fn relu_margin_of<T: Scalar>(
    params: &[Tensor<T>],
    build: impl LossBuilder<T>,
) -> Result<Option<T>, NumError> {
    let tape = Tape::new();
    let vars: Vec<Var<'_, T>> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let _ = build(&tape, &vars)?;
    Ok(tape.relu_margin())
}

/// Loss builder over a bound parameter store plus extra free inputs.
pub trait StoreLossBuilder<T: Scalar>:
    for<'t> Fn(&Bind<'t, T>, &[Var<'t, T>]) -> Result<Var<'t, T>, NumError>
{
}

/// Identity helper that fixes a closure to the higher-ranked loss-builder
/// signature (lets `let build = store_loss(|ctx, vars| ...)` infer).
pub fn store_loss<T, F>(f: F) -> F
where
    T: Scalar,
    F: for<'t> Fn(&Bind<'t, T>, &[Var<'t, T>]) -> Result<Var<'t, T>, NumError>,
{
    f
}

impl<T: Scalar, F> StoreLossBuilder<T> for F where
    F: for<'t> Fn(&Bind<'t, T>, &[Var<'t, T>]) -> Result<Var<'t, T>, NumError>
{
}

fn eval_store_loss<T: Scalar>(
    store: &ParamStore<T>,
    extra: &[Tensor<T>],
    build: &impl StoreLossBuilder<T>,
) -> Result<T, NumError> {
    let tape = Tape::new();
    let ctx = Bind::new(&tape, store);
    let vars: Vec<Var<'_, T>> = extra.iter().map(|p| tape.constant(p.clone())).collect();
    let v = build(&ctx, &vars)?.value().item()?;
    if !v.is_finite() {
        return Err(NumError::NonFinite { op: "gradient_check" });
    }
    Ok(v)
}

/// [`gradient_check`] over every parameter of a store (and any extra inputs),
/// with the forward pass written against a [`Bind`] the way model code is.
pub fn gradient_check_store<T: Scalar>(
    store: &ParamStore<T>,
    extra: &[Tensor<T>],
    eps: T,
    build: impl StoreLossBuilder<T>,
) -> Result<T, NumError> {
    // Analytic pass.
    let tape = Tape::new();
    let ctx = Bind::new(&tape, store);
    let extra_vars: Vec<Var<'_, T>> = extra.iter().map(|p| tape.trainable(p.clone())).collect();
    let loss = build(&ctx, &extra_vars)?;
    if !loss.value().item()?.is_finite() {
        return Err(NumError::NonFinite { op: "gradient_check" });
    }
    tape.backward(loss)?;
    let extra_grads: Vec<Tensor<T>> = extra_vars
        .iter()
        .zip(extra)
        .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    let mut named_grads: std::collections::BTreeMap<String, Tensor<T>> = ctx
        .collect_grads()
        .into_iter()
        .collect();

    let floor = T::from_f64_lossy(1e-8);
    let two = T::from_f64_lossy(2.0);
    let mut worst = T::zero();
    let mut check = |a: T, fd: T| {
        let denom = a.abs().max(fd.abs()).max(floor);
        let rel = (a - fd).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    };

    // Store parameters.
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut work = clone_store(store);
    for name in &names {
        let len = store.get(name)?.len();
        let analytic = named_grads
            .remove(name)
            .unwrap_or_else(|| Tensor::zeros(store.get(name).unwrap().shape()));
        for k in 0..len {
            let original = work.get(name)?.data()[k];
            work.get_mut(name)?.data_mut()[k] = original + eps;
            let plus = eval_store_loss(&work, extra, &build)?;
            work.get_mut(name)?.data_mut()[k] = original - eps;
            let minus = eval_store_loss(&work, extra, &build)?;
            work.get_mut(name)?.data_mut()[k] = original;
            check(analytic.data()[k], (plus - minus) / (two * eps));
        }
    }

    // Extra inputs.
    let mut work_extra = extra.to_vec();
    for (pi, p) in extra.iter().enumerate() {
        for k in 0..p.len() {
            let original = work_extra[pi].data()[k];
            work_extra[pi].data_mut()[k] = original + eps;
            let plus = eval_store_loss(store, &work_extra, &build)?;
            work_extra[pi].data_mut()[k] = original - eps;
            let minus = eval_store_loss(store, &work_extra, &build)?;
            work_extra[pi].data_mut()[k] = original;
            check(extra_grads[pi].data()[k], (plus - minus) / (two * eps));
        }
    }
    Ok(worst)
}

/// Relu kink margin of one forward pass over a bound store.
pub fn relu_margin_of_store<T: Scalar>(
    store: &ParamStore<T>,
    extra: &[Tensor<T>],
    build: impl StoreLossBuilder<T>,
) -> Result<Option<T>, NumError> {
    let tape = Tape::new();
    let ctx = Bind::new(&tape, store);
    let vars: Vec<Var<'_, T>> = extra.iter().map(|p| tape.constant(p.clone())).collect();
    let _ = build(&ctx, &vars)?;
    Ok(tape.relu_margin())
}

fn clone_store<T: Scalar>(store: &ParamStore<T>) -> ParamStore<T> {
    let mut out = ParamStore::new();
    for (name, entry) in store.iter() {
        out.insert(name.to_string(), entry.value.clone())
            .expect("fresh store");
    }
    out
}
