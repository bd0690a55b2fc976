//! Turns a resolved configuration into library objects.

use nalgebra::{DMatrix, DVector};
use srwalk::connections::{frame_parallel_connection, kappa_correction};
use srwalk::geodesics::DT_EXPERIMENT;
use srwalk::models::{self, default_anisotropy, default_frame_start, orthonormal_coordinate_frame, Model};
use srwalk::walker::FrameCheck;
use srwalk::{AffineConnection, Point, Retraction, RiemannianMetric, SubRiemannianStructure};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Everything an experiment needs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Model,
    pub structure: SubRiemannianStructure,
    pub retraction: Retraction,
    /// Connection behind the retraction, when it has one.
    pub connection: Option<AffineConnection>,
    pub metric: Option<RiemannianMetric>,
    pub anisotropy: Option<DMatrix<f64>>,
    pub start: Point,
}

impl Experiment {
    /// Initial frame for frame walks: `F_SO(x) · A`.
    pub fn initial_frame(&self, x: &Point) -> Option<DMatrix<f64>> {
        if !self.retraction.transports_frames() {
            return None;
        }
        let f = orthonormal_coordinate_frame(&self.metric.as_ref()?.metric(x));
        Some(match &self.anisotropy {
            Some(a) => f * a,
            None => f,
        })
    }

    pub fn frame_check(&self) -> Option<FrameCheck> {
        Some(FrameCheck {
            metric: self.metric.clone()?,
            anisotropy: self.anisotropy.clone(),
        })
    }
}

pub fn metric_of(model: &Model) -> Option<&RiemannianMetric> {
    match model {
        Model::SubRiemannian(_) => None,
        Model::Ellipsoid(e) => Some(&e.metric),
        Model::EllipsoidFrames(f) => Some(&f.surface.metric),
    }
}

pub fn levi_civita_of(model: &Model) -> Option<&AffineConnection> {
    match model {
        Model::SubRiemannian(_) => None,
        Model::Ellipsoid(e) => Some(&e.levi_civita),
        Model::EllipsoidFrames(f) => Some(&f.surface.levi_civita),
    }
}

/// Builds a named connection for a model.
pub fn build_connection(model: &Model, name: &str) -> Result<AffineConnection, CliError> {
    let s = model.structure();
    match name {
        "frame-parallel" => Ok(frame_parallel_connection(s)),
        "kappa-corrected" => Ok(kappa_correction(s, &frame_parallel_connection(s))?),
        "flat" => Ok(AffineConnection::flat(s.domain().clone())),
        "levi-civita" => levi_civita_of(model)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("model `{}` has no Riemannian metric for levi-civita", s.name()))),
        other => Err(CliError::Config(format!("unknown connection `{other}`"))),
    }
}

fn default_start(model: &Model) -> Point {
    match model {
        Model::SubRiemannian(s) => DVector::zeros(s.n()),
        Model::Ellipsoid(_) => default_frame_start(),
        Model::EllipsoidFrames(f) => f.start.clone(),
    }
}

pub fn build(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let model = models::lookup(&cfg.model)?;
    let structure = model.structure().clone();
    let metric = metric_of(&model).cloned();
    let needs_metric = |kind: &str| {
        metric
            .clone()
            .ok_or_else(|| CliError::Config(format!("{kind} needs a Riemannian model (ellipsoid, ellipsoid-frames)")))
    };
    let (retraction, connection, anisotropy) = match cfg.retraction.as_str() {
        "exact-exp" => (
            Retraction::ExactExp {
                structure: structure.clone(),
                dt: DT_EXPERIMENT,
            },
            None,
            None,
        ),
        "ret1" => (Retraction::Ret1 { structure: structure.clone() }, None, None),
        "ret2" => {
            let c = build_connection(&model, &cfg.connection)?;
            (Retraction::Ret2 { connection: c.clone() }, Some(c), None)
        }
        "ret3" => {
            let c = build_connection(&model, &cfg.connection)?;
            let metric = needs_metric("ret3")?;
            (Retraction::Ret3 { connection: c.clone(), metric }, Some(c), None)
        }
        "ret3-prime" => {
            let c = build_connection(&model, &cfg.connection)?;
            let metric = needs_metric("ret3-prime")?;
            let a = match &model {
                Model::EllipsoidFrames(f) => f.anisotropy.clone(),
                _ => default_anisotropy(),
            };
            (
                Retraction::Ret3Prime {
                    connection: c.clone(),
                    metric,
                    anisotropy: Some(a.clone()),
                },
                Some(c),
                Some(a),
            )
        }
        other => return Err(CliError::Config(format!("unknown retraction `{other}`"))),
    };
    if matches!(model, Model::EllipsoidFrames(_)) && !retraction.transports_frames() {
        return Err(CliError::Config("ellipsoid-frames needs ret3 or ret3-prime".into()));
    }
    let start = match &cfg.start {
        Some(v) => DVector::from_row_slice(v),
        None => default_start(&model),
    };
    structure.check_domain(&start)?;
    Ok(Experiment {
        model,
        structure,
        retraction,
        connection,
        metric,
        anisotropy,
        start,
    })
}
