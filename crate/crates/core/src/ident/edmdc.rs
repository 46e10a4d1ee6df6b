//! One-shot least-squares EDMD with control.

use nalgebra::DMatrix;

use super::era::estimate_c;
use super::lifting::{LiftedData, MeasurementWindow};
use super::model::IdentifiedModel;
use crate::error::{MgError, Result};
use crate::linalg::{pinv, singular_values_desc};

/// Fit `z_{j} = A z_{j-1} + B u_j` over consecutive columns.
pub fn edmdc_fit(
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    ridge: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    let (n_s, len) = z.shape();
    let m = u.nrows();
    if u.ncols() != len {
        return Err(MgError::Dimension(
            "state and input sample counts differ".into(),
        ));
    }
    if len < 2 {
        return Err(MgError::InvalidArgument(
            "EDMDc needs at least two samples".into(),
        ));
    }
    let mut omega = DMatrix::zeros(n_s + m, len - 1);
    omega
        .view_mut((0, 0), (n_s, len - 1))
        .copy_from(&z.columns(0, len - 1));
    omega
        .view_mut((n_s, 0), (m, len - 1))
        .copy_from(&u.columns(1, len - 1));
    let target = z.columns(1, len - 1).into_owned();
    let ab = target * pinv(&omega, ridge);
    let s = singular_values_desc(&omega);
    let rank = match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > ridge * smax).count(),
        _ => 0,
    };
    Ok((
        ab.columns(0, n_s).into_owned(),
        ab.columns(n_s, m).into_owned(),
        rank,
    ))
}

/// Classical EDMDc on the lifted window.
pub fn edmdc_baseline(w: &MeasurementWindow, v_nom: f64, ridge: f64) -> Result<IdentifiedModel> {
    let data = LiftedData::from_window(w, v_nom);
    let (a, b, rank) = edmdc_fit(&data.z, &w.u, ridge)?;
    let c = estimate_c(&data.y, &data.z, ridge);
    Ok(IdentifiedModel {
        c_markov: c.clone(),
        a,
        b,
        c,
        gamma_opt: 0.5,
        rank_r: rank,
    })
}
