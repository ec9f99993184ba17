//! Constant-velocity Kalman filter over `[cx, cy, w, h, vx, vy, vw, vh]`.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;

pub type State = SVector<f64, 8>;
pub type Cov = SMatrix<f64, 8, 8>;
pub type Measurement = SVector<f64, 4>;
type Obs = SMatrix<f64, 4, 8>;

const SINGULAR_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub q_diag: [f64; 8],
    pub s_diag: [f64; 4],
    pub p0: f64,
    pub dt: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q_diag: [1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0],
            s_diag: [4.0; 4],
            p0: 10.0,
            dt: 1.0,
        }
    }
}

/// Transition, observation and noise matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    pub a: Cov,
    pub h: Obs,
    pub q: Cov,
    pub s: SMatrix<f64, 4, 4>,
    pub p0: f64,
}

impl KalmanModel {
    pub fn new(params: &KalmanParams) -> Self {
        let mut a = Cov::identity();
        let mut h = Obs::zeros();
        for i in 0..4 {
            a[(i, i + 4)] = params.dt;
            h[(i, i)] = 1.0;
        }
        Self {
            a,
            h,
            q: Cov::from_diagonal(&SVector::from(params.q_diag)),
            s: SMatrix::from_diagonal(&SVector::from(params.s_diag)),
            p0: params.p0,
        }
    }
}

impl Default for KalmanModel {
    fn default() -> Self {
        Self::new(&KalmanParams::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: State,
    pub p: Cov,
}

/// Result of a prediction; `clamped` is set when the predicted size had to be
/// pushed back to one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub bbox: BoundingBox,
    pub clamped: bool,
}

impl KalmanState {
    /// Zero velocity, covariance `p0 * I`.
    pub fn from_box(b: &BoundingBox, model: &KalmanModel) -> Self {
        let mut x = State::zeros();
        x.fixed_rows_mut::<4>(0).copy_from_slice(&b.to_vector());
        Self {
            x,
            p: Cov::identity() * model.p0,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::from_vector([self.x[0], self.x[1], self.x[2], self.x[3]])
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.x[4], self.x[5], self.x[6], self.x[7]]
    }

    pub fn predict(&mut self, model: &KalmanModel) -> Prediction {
        self.x = model.a * self.x;
        self.p = model.a * self.p * model.a.transpose() + model.q;
        let mut clamped = false;
        for i in 2..4 {
            if self.x[i] <= 0.0 {
                self.x[i] = 1.0;
                clamped = true;
            }
        }
        Prediction {
            bbox: self.bbox(),
            clamped,
        }
    }

    pub fn gain(&self, model: &KalmanModel) -> SMatrix<f64, 8, 4> {
        let pht = self.p * model.h.transpose();
        let innov = model.h * pht + model.s;
        let inv = innov.try_inverse().unwrap_or_else(|| {
            (innov + SMatrix::<f64, 4, 4>::identity() * SINGULAR_EPS)
                .try_inverse()
                .expect("regularized innovation covariance is invertible")
        });
        pht * inv
    }

    pub fn update(&mut self, z: &Measurement, model: &KalmanModel) {
        let k = self.gain(model);
        self.x += k * (z - model.h * self.x);
        self.p = (Cov::identity() - k * model.h) * self.p;
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    pub fn update_box(&mut self, z: &BoundingBox, model: &KalmanModel) {
        self.update(&Measurement::from(z.to_vector()), model);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model_with(s: f64) -> KalmanModel {
        KalmanModel::new(&KalmanParams {
            s_diag: [s; 4],
            ..Default::default()
        })
    }

    #[test]
    fn prediction_examples() {
        let m = KalmanModel::default();
        let b = BoundingBox::new(50.0, 40.0, 20.0, 10.0);
        let mut st = KalmanState::from_box(&b, &m);
        assert_eq!(st.predict(&m).bbox, b);

        st.x[4] = 5.0;
        let p = st.predict(&m);
        assert_eq!(p.bbox.cx, 55.0);
        for k in 2..=11 {
            st.predict(&m);
            assert_eq!(st.x[0], 50.0 + 5.0 * k as f64);
        }

        let mut shrinking = KalmanState::from_box(&b, &m);
        shrinking.x[6] = -30.0;
        let p = shrinking.predict(&m);
        assert!(p.clamped);
        assert_eq!(p.bbox.w, 1.0);
    }

    /// Each coordinate evolves as an independent (position, velocity) pair,
    /// so the filter reduces to 2x2 algebra written out by hand.
    fn scalar_track(pos0: f64, zs: &[f64], q: (f64, f64), s: f64, p0: f64) -> (f64, f64, [[f64; 2]; 2]) {
        let (mut x, mut v) = (pos0, 0.0);
        let mut p = [[p0, 0.0], [0.0, p0]];
        for &z in zs {
            x += v;
            p = [
                [p[0][0] + p[0][1] + p[1][0] + p[1][1] + q.0, p[0][1] + p[1][1]],
                [p[1][0] + p[1][1], p[1][1] + q.1],
            ];
            let denom = p[0][0] + s;
            let (k0, k1) = (p[0][0] / denom, p[1][0] / denom);
            let r = z - x;
            x += k0 * r;
            v += k1 * r;
            p = [
                [(1.0 - k0) * p[0][0], (1.0 - k0) * p[0][1]],
                [p[1][0] - k1 * p[0][0], p[1][1] - k1 * p[0][1]],
            ];
        }
        (x, v, p)
    }

    #[test]
    fn two_frame_closed_form() {
        let m = KalmanModel::default();
        let b0 = BoundingBox::new(100.0, 80.0, 32.0, 24.0);
        let zs = [
            BoundingBox::new(103.0, 81.0, 33.0, 24.0),
            BoundingBox::new(106.5, 82.5, 31.0, 25.0),
        ];
        let mut st = KalmanState::from_box(&b0, &m);
        for z in &zs {
            st.predict(&m);
            st.update_box(z, &m);
        }
        for i in 0..4 {
            let obs: Vec<f64> = zs.iter().map(|z| z.to_vector()[i]).collect();
            let (x, v, p) = scalar_track(b0.to_vector()[i], &obs, (1.0, 4.0), 4.0, 10.0);
            assert!((st.x[i] - x).abs() < 1e-9);
            assert!((st.x[i + 4] - v).abs() < 1e-9);
            assert!((st.p[(i, i)] - p[0][0]).abs() < 1e-9);
            assert!((st.p[(i + 4, i + 4)] - p[1][1]).abs() < 1e-9);
            assert!((st.p[(i, i + 4)] - p[0][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn measurement_trust_limits() {
        let z = BoundingBox::new(60.0, 70.0, 12.0, 14.0);
        let b = BoundingBox::new(50.0, 50.0, 10.0, 10.0);

        let exact = model_with(1e-12);
        let mut st = KalmanState::from_box(&b, &exact);
        st.predict(&exact);
        st.update_box(&z, &exact);
        for (got, want) in st.bbox().to_vector().iter().zip(z.to_vector()) {
            assert!((got - want).abs() < 1e-6);
        }

        let ignore = model_with(1e15);
        let mut st = KalmanState::from_box(&b, &ignore);
        st.predict(&ignore);
        let prior = st.x;
        st.update_box(&z, &ignore);
        assert!((st.x - prior).amax() < 1e-6);
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Cov {
        let l = Cov::from_fn(|_, _| rng.random_range(-2.0..2.0));
        l * l.transpose() + Cov::identity() * 0.1
    }

    #[test]
    fn joseph_form_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = KalmanModel::default();
        for _ in 0..200 {
            let st = KalmanState {
                x: State::zeros(),
                p: random_spd(&mut rng),
            };
            let k = st.gain(&m);
            let ikh = Cov::identity() - k * m.h;
            let standard = ikh * st.p;
            let joseph = ikh * st.p * ikh.transpose() + k * m.s * k.transpose();
            assert!((standard - joseph).amax() < 1e-9 * (1.0 + st.p.amax()));
            assert!(standard.trace() <= st.p.trace() + 1e-9);
        }
    }

    #[test]
    fn singular_innovation_is_regularized() {
        let mut m = model_with(0.0);
        m.p0 = 0.0;
        let mut st = KalmanState::from_box(&BoundingBox::new(1.0, 1.0, 1.0, 1.0), &m);
        st.update_box(&BoundingBox::new(2.0, 2.0, 2.0, 2.0), &m);
        assert!(st.x.iter().all(|v| v.is_finite()));
    }
}
