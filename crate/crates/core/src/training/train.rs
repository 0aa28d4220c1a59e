use crate::autodiff::batch::Graph;
use crate::models::Model;

use super::{AdamState, Objective, Schedule, TrainingError};

/// Loss and learning rate at one epoch, before that epoch's update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Full-batch Adam for `schedule.total_epochs` epochs. `callback` sees each
/// epoch's stats together with the parameters the loss was evaluated at (the
/// model after `epoch` updates). Returns the learning curve.
pub fn train(
    model: &mut Model,
    objective: &dyn Objective,
    schedule: &Schedule,
    mut callback: impl FnMut(&EpochStats, &Model),
) -> Result<Vec<EpochStats>, TrainingError> {
    if schedule.total_epochs == 0 {
        return Err(TrainingError::InvalidConfig("epochs must be >= 1".into()));
    }
    let mut params = model.parameters();
    let mut adam = AdamState::new(params.len(), schedule.initial_lr);
    let mut curve = Vec::with_capacity(schedule.total_epochs);
    for epoch in 0..schedule.total_epochs {
        let mut g = Graph::new();
        let vars = model.register_params(&mut g);
        let loss_var = objective.loss(&mut g, model, &vars);
        let loss = g.scalar(loss_var);
        if !loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss { epoch, value: loss });
        }
        let grads = g.backward(loss_var).flatten();
        drop(g);
        let stats = EpochStats {
            epoch,
            lr: schedule.lr(epoch),
            loss,
        };
        callback(&stats, model);
        curve.push(stats);
        adam.lr = stats.lr;
        adam.step(&mut params, &grads)?;
        model.set_parameters(&params)?;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EncodingSpec, LearnedActivation, ModelKind, ModelSpec};
    use crate::training::{FieldFit, ScheduleKind};
    use ndarray::Array2;

    fn linear_model() -> Model {
        // one hidden unit kept in the linear regime: out = w2 (w1 x + b1) + b2
        let mut spec = ModelSpec::new(ModelKind::MlpRelu, 1, 1, 1, 1);
        spec.encoding = EncodingSpec::identity();
        let mut m = Model::build(&spec, 0).unwrap();
        m.set_parameters(&[0.5, 2.0, 0.3, 0.1]).unwrap();
        m
    }

    #[test]
    fn exact_model_keeps_constant_loss() {
        let m0 = linear_model();
        let coords = Array2::from_shape_fn((5, 1), |(i, _)| i as f64 * 0.2 - 0.4);
        let target = m0.predict(&coords).unwrap();
        let obj = FieldFit::new(&m0, &coords, target).unwrap();
        let mut m = m0.clone();
        let s = Schedule::new(ScheduleKind::Constant, 0.01, 5).unwrap();
        let curve = train(&mut m, &obj, &s, |_, _| {}).unwrap();
        assert!(curve.iter().all(|c| c.loss == 0.0));
        assert_eq!(m, m0);
    }

    #[test]
    fn linear_target_decreases_monotonically() {
        let mut m = linear_model();
        let coords = Array2::from_shape_fn((9, 1), |(i, _)| i as f64 * 0.25 - 1.0);
        let target = coords.mapv(|x| 0.8 * x + 0.6);
        let obj = FieldFit::new(&m, &coords, target).unwrap();
        let s = Schedule::new(ScheduleKind::Constant, 1e-3, 200).unwrap();
        let curve = train(&mut m, &obj, &s, |_, _| {}).unwrap();
        assert_eq!(curve.len(), 200);
        for w in curve.windows(2) {
            assert!(w[1].loss < w[0].loss);
        }
    }

    #[test]
    fn deterministic_and_callback_order() {
        let run = || {
            let mut spec = ModelSpec::new(ModelKind::Nestnet, 2, 1, 8, 2);
            spec.encoding = EncodingSpec::fourier(4).with_scale(0.5);
            let mut m = Model::build(&spec, 5).unwrap();
            let coords = crate::operators::pixel_coords(6, 6);
            let target = coords.map_axis(ndarray::Axis(1), |r| (3.0 * r[0]).sin() * r[1]).insert_axis(ndarray::Axis(1));
            let obj = FieldFit::new(&m, &coords, target).unwrap();
            let s = Schedule::new(ScheduleKind::Exponential { final_fraction: 0.1 }, 5e-3, 30).unwrap();
            let mut seen = Vec::new();
            let mut first_act = None;
            let curve = train(&mut m, &obj, &s, |st, model| {
                seen.push(st.epoch);
                if st.epoch == 0 {
                    first_act = Some(model.learned_activations()[0][0]);
                }
            })
            .unwrap();
            assert_eq!(seen, (0..30).collect::<Vec<_>>());
            assert_eq!(first_act, Some(LearnedActivation::initial()));
            (curve, m.parameters())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert!(a.last().unwrap().loss < a[0].loss);
    }

    #[test]
    fn all_activation_parameters_move() {
        let mut spec = ModelSpec::new(ModelKind::Nestnet, 2, 1, 8, 2);
        spec.encoding = EncodingSpec::fourier(4).with_scale(0.5);
        let mut m = Model::build(&spec, 2).unwrap();
        let coords = crate::operators::pixel_coords(8, 8);
        let target = coords.map_axis(ndarray::Axis(1), |r| (2.0 * r[0]).cos() + r[1]).insert_axis(ndarray::Axis(1));
        let obj = FieldFit::new(&m, &coords, target).unwrap();
        let s = Schedule::new(ScheduleKind::Constant, 5e-3, 1).unwrap();
        train(&mut m, &obj, &s, |_, _| {}).unwrap();
        let init = LearnedActivation::initial();
        for layer in m.learned_activations() {
            let a = layer[0];
            assert!(a.w1.iter().zip(init.w1).all(|(x, y)| *x != y));
            assert!(a.b1.iter().zip(init.b1).all(|(x, y)| *x != y));
            assert!(a.w2.iter().zip(init.w2).all(|(x, y)| *x != y));
            assert_ne!(a.b2, init.b2);
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut m = linear_model();
        let coords = Array2::zeros((1, 1));
        let obj = FieldFit::new(&m, &coords, Array2::zeros((1, 1))).unwrap();
        let s = Schedule::new(ScheduleKind::Constant, 0.1, 0).unwrap();
        assert!(train(&mut m, &obj, &s, |_, _| {}).is_err());
    }
}
