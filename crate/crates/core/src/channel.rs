//! Air-to-ground links: distance, Rician power gains, SINR, Shannon rates
//! and best-SINR association.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams<T> {
    /// Power gain at the 1 m reference distance (linear).
    pub w0: T,
    /// Path-loss exponent.
    pub alpha: T,
    /// Rician factor (linear). Infinity gives a pure line-of-sight link.
    pub rician_g: T,
    /// Per-link bandwidth, Hz.
    pub bandwidth: T,
    /// Thermal noise power, W.
    pub noise_power: T,
    /// Transmit power of every active cell, W.
    pub gbs_tx_power: T,
    /// Antenna height of the ground stations, m.
    pub gbs_height: T,
}

impl<T: Scalar> Default for ChannelParams<T> {
    fn default() -> Self {
        Self {
            // -30 dB at 1 m.
            w0: T::lit(1e-3),
            alpha: T::lit(2.5),
            rician_g: T::lit(10.0),
            bandwidth: T::lit(1e6),
            // -114 dBm over 1 MHz.
            noise_power: T::lit(4e-15),
            gbs_tx_power: T::lit(0.5),
            gbs_height: T::lit(30.0),
        }
    }
}

impl<T: Scalar> ChannelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |what: &'static str, ok: bool, v: T| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidValue {
                    what,
                    value: v.as_f64(),
                })
            }
        };
        check("alpha", self.alpha >= T::lit(2.0), self.alpha)?;
        check("rician_g", self.rician_g >= T::zero(), self.rician_g)?;
        check("bandwidth", self.bandwidth > T::zero(), self.bandwidth)?;
        check("noise_power", self.noise_power > T::zero(), self.noise_power)?;
        check("w0", self.w0 > T::zero(), self.w0)?;
        check("gbs_tx_power", self.gbs_tx_power >= T::zero(), self.gbs_tx_power)?;
        check("gbs_height", self.gbs_height > T::zero(), self.gbs_height)
    }

    /// Amplitude weights of the LoS and scattered components.
    fn rician_weights(&self) -> (T, T) {
        let g = self.rician_g;
        if g.is_infinite() {
            (T::one(), T::zero())
        } else {
            let denom = T::one() + g;
            ((g / denom).sqrt(), (T::one() / denom).sqrt())
        }
    }

    /// Mean power gain at distance `d`.
    pub fn large_scale_gain(&self, d: T) -> T {
        self.w0 * d.powf(-self.alpha)
    }
}

/// Slant distance between a transmitter at height `altitude` above
/// `tx_pos` and a ground user at `user_pos`.
pub fn link_distance<T: Scalar>(tx_pos: [T; 2], altitude: T, user_pos: [T; 2]) -> T {
    let dx = tx_pos[0] - user_pos[0];
    let dy = tx_pos[1] - user_pos[1];
    (altitude * altitude + dx * dx + dy * dy).sqrt()
}

/// `|h~|^2` of one Rician draw, normalized so its mean is one. The LoS
/// phase is fixed at zero; the scattered part is unit-variance complex
/// Gaussian.
pub fn sample_small_scale<T: Scalar, R: Rng + ?Sized>(params: &ChannelParams<T>, rng: &mut R) -> T {
    let (los, nlos) = params.rician_weights();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let half = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let real = los + nlos * half * T::lit(re);
    let imag = nlos * half * T::lit(im);
    real * real + imag * imag
}

/// One faded power gain `w0 d^-alpha |h~|^2`.
pub fn sample_channel_gain<T: Scalar, R: Rng + ?Sized>(d: T, params: &ChannelParams<T>, rng: &mut R) -> Result<T> {
    if !(d > T::zero()) {
        return Err(Error::InvalidValue {
            what: "link distance",
            value: d.as_f64(),
        });
    }
    Ok(params.large_scale_gain(d) * sample_small_scale(params, rng))
}

/// Row-major `rows x cols` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect::<Vec<_>>();
        assert_eq!(data.len(), rows.len() * cols, "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

/// Faded gains from every transmitter to every user. Rows are the UAVs
/// (at `altitude`) followed by the active cells (at `gbs_height`, placed at
/// their cell centres). Draw order is row-major.
pub fn sample_gain_matrix<T: Scalar, R: Rng + ?Sized>(
    uav_positions: &[[T; 2]],
    altitude: T,
    active_cell_centers: &[[T; 2]],
    user_positions: &[[T; 2]],
    params: &ChannelParams<T>,
    rng: &mut R,
) -> Result<Matrix<T>> {
    let tx = uav_positions
        .iter()
        .map(|&p| (p, altitude))
        .chain(active_cell_centers.iter().map(|&p| (p, params.gbs_height)));
    let mut m = Matrix::zeros(uav_positions.len() + active_cell_centers.len(), user_positions.len());
    for (i, (pos, h)) in tx.enumerate() {
        for (j, &u) in user_positions.iter().enumerate() {
            m.set(i, j, sample_channel_gain(link_distance(pos, h, u), params, rng)?);
        }
    }
    Ok(m)
}

/// Per-user inputs to the SINR computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserLink<T> {
    /// Required rate, bits/s.
    pub demand: T,
    /// Home cell is active: the user is served by the ground network and
    /// takes no part in UAV association.
    pub gbs_served: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrReport<T> {
    /// `(N + active cells) x M` power gains.
    pub gains: Matrix<T>,
    /// `N x M` SINR, linear.
    pub sinr: Matrix<T>,
    /// `N x M` achievable rates, bits/s.
    pub rates: Matrix<T>,
    /// Serving UAV per user, if any.
    pub assoc: Vec<Option<usize>>,
    /// Associated and meeting its required rate.
    pub served_mask: Vec<bool>,
}

impl<T: Scalar> SinrReport<T> {
    pub fn num_uavs(&self) -> usize {
        self.sinr.rows
    }

    /// Users served by UAV `i`.
    pub fn served_by(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.assoc
            .iter()
            .zip(&self.served_mask)
            .enumerate()
            .filter(move |(_, (a, &s))| s && **a == Some(i))
            .map(|(j, _)| j)
    }
}

/// SINR of every UAV-user pair with interference from the other UAVs and
/// every active cell, Shannon rates over the full bandwidth, and
/// association to the best-SINR UAV (lowest index on ties).
pub fn compute_sinr<T: Scalar>(
    uav_powers: &[T],
    gains: &Matrix<T>,
    users: &[UserLink<T>],
    params: &ChannelParams<T>,
) -> Result<SinrReport<T>> {
    let n = uav_powers.len();
    if gains.rows < n {
        return Err(Error::Shape {
            context: "gain rows",
            expected: n,
            got: gains.rows,
        });
    }
    if gains.cols != users.len() {
        return Err(Error::Shape {
            context: "gain columns",
            expected: users.len(),
            got: gains.cols,
        });
    }
    let m = users.len();
    let mut sinr = Matrix::zeros(n, m);
    let mut rates = Matrix::zeros(n, m);
    let mut assoc = vec![None; m];
    let mut served_mask = vec![false; m];

    for (j, user) in users.iter().enumerate() {
        let received: Vec<T> = (0..n).map(|i| uav_powers[i] * gains.get(i, j)).collect();
        let gbs_total: T = (n..gains.rows).map(|c| params.gbs_tx_power * gains.get(c, j)).sum();
        for i in 0..n {
            let interference: T = (0..n).filter(|&k| k != i).map(|k| received[k]).sum();
            let denom = params.noise_power + interference + gbs_total;
            let g = if received[i] == T::zero() {
                T::zero()
            } else {
                received[i] / denom
            };
            sinr.set(i, j, g);
            rates.set(i, j, params.bandwidth * (T::one() + g).log2());
        }
        if user.gbs_served {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for i in 0..n {
            let g = sinr.get(i, j);
            if g > T::zero() && best.is_none_or(|(_, b)| g > b) {
                best = Some((i, g));
            }
        }
        if let Some((i, _)) = best {
            assoc[j] = Some(i);
            served_mask[j] = rates.get(i, j) >= user.demand;
        }
    }

    Ok(SinrReport {
        gains: gains.clone(),
        sinr,
        rates,
        assoc,
        served_mask,
    })
}

/// Sum of the rates over associated pairs.
pub fn total_throughput<T: Scalar>(report: &SinrReport<T>) -> T {
    report
        .assoc
        .iter()
        .enumerate()
        .filter_map(|(j, a)| a.map(|i| report.rates.get(i, j)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::rng_stream;

    fn params() -> ChannelParams<f64> {
        ChannelParams {
            noise_power: 1.0,
            gbs_tx_power: 1.0,
            ..ChannelParams::default()
        }
    }

    #[test]
    fn distances() {
        assert_eq!(link_distance([0.0, 0.0], 100.0, [0.0, 0.0]), 100.0);
        assert_eq!(link_distance([3.0, 0.0], 4.0, [0.0, 0.0]), 5.0);
        let d = link_distance([120.0, -50.0], 100.0, [20.0, 30.0]);
        let oracle = (100.0f64 * 100.0 + 100.0 * 100.0 + 80.0 * 80.0).sqrt();
        assert!((d - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn pure_los_gain_is_deterministic() {
        let mut p = params();
        p.rician_g = f64::INFINITY;
        p.alpha = 2.0;
        p.w0 = 0.25;
        let mut rng = rng_stream(1, 0);
        assert_eq!(sample_channel_gain(1.0, &p, &mut rng).unwrap(), 0.25);
        let g = sample_channel_gain(10.0, &p, &mut rng).unwrap();
        assert!((g - 0.25 * 10.0f64.powf(-2.0)).abs() < 1e-18);
    }

    #[test]
    fn nonpositive_distance_rejected() {
        let mut rng = rng_stream(1, 0);
        assert!(sample_channel_gain(0.0, &params(), &mut rng).is_err());
        assert!(sample_channel_gain(-1.0, &params(), &mut rng).is_err());
    }

    #[test]
    fn unit_snr_gives_bandwidth_rate() {
        let p = params();
        let gains = Matrix::from_rows(&[vec![2.0]]);
        // P |h|^2 = 0.5 * 2 = sigma^2 = 1.
        let r = compute_sinr(
            &[0.5],
            &gains,
            &[UserLink {
                demand: 1.0,
                gbs_served: false,
            }],
            &p,
        )
        .unwrap();
        assert_eq!(r.sinr.get(0, 0), 1.0);
        assert_eq!(r.rates.get(0, 0), p.bandwidth);
        assert_eq!(r.assoc, vec![Some(0)]);
        assert_eq!(total_throughput(&r), p.bandwidth);
    }

    #[test]
    fn zero_power_serves_nobody() {
        let p = params();
        let gains = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let users = [UserLink {
            demand: 1.0,
            gbs_served: false,
        }; 2];
        let r = compute_sinr(&[0.0, 0.0], &gains, &users, &p).unwrap();
        assert!(r.sinr.data.iter().all(|&g| g == 0.0));
        assert!(r.rates.data.iter().all(|&g| g == 0.0));
        assert_eq!(r.assoc, vec![None, None]);
        assert_eq!(total_throughput(&r), 0.0);
    }

    #[test]
    fn two_by_two_matches_scalar_formula() {
        let p = ChannelParams {
            noise_power: 0.3,
            gbs_tx_power: 0.7,
            ..params()
        };
        // Two UAVs and one active cell.
        let g = [[0.9, 0.2], [0.4, 1.1], [0.05, 0.3]];
        let gains = Matrix::from_rows(&g.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        let pw = [1.5, 0.8];
        let users = [UserLink {
            demand: 1e5,
            gbs_served: false,
        }; 2];
        let r = compute_sinr(&pw, &gains, &users, &p).unwrap();
        let g00 = 1.5 * 0.9 / (0.3 + 0.8 * 0.4 + 0.7 * 0.05);
        let g10 = 0.8 * 0.4 / (0.3 + 1.5 * 0.9 + 0.7 * 0.05);
        let g01 = 1.5 * 0.2 / (0.3 + 0.8 * 1.1 + 0.7 * 0.3);
        let g11 = 0.8 * 1.1 / (0.3 + 1.5 * 0.2 + 0.7 * 0.3);
        for (i, j, want) in [(0, 0, g00), (1, 0, g10), (0, 1, g01), (1, 1, g11)] {
            let got = r.sinr.get(i, j);
            assert!((got - want).abs() <= 1e-12 * want, "{i}{j}: {got} vs {want}");
        }
        assert_eq!(r.assoc, vec![Some(0), Some(1)]);
    }

    #[test]
    fn gbs_served_users_skip_association() {
        let p = params();
        let gains = Matrix::from_rows(&[vec![5.0, 5.0]]);
        let users = [
            UserLink {
                demand: 1.0,
                gbs_served: true,
            },
            UserLink {
                demand: 1.0,
                gbs_served: false,
            },
        ];
        let r = compute_sinr(&[1.0], &gains, &users, &p).unwrap();
        assert_eq!(r.assoc, vec![None, Some(0)]);
        assert_eq!(r.served_mask, vec![false, true]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = params();
        let gains = Matrix::from_rows(&[vec![1.0], vec![1.0]]);
        let r = compute_sinr(
            &[1.0, 1.0],
            &gains,
            &[UserLink {
                demand: 0.0,
                gbs_served: false,
            }],
            &p,
        )
        .unwrap();
        assert_eq!(r.assoc, vec![Some(0)]);
    }

    #[test]
    fn shape_errors() {
        let p = params();
        let gains = Matrix::from_rows(&[vec![1.0, 1.0]]);
        let users = [UserLink {
            demand: 0.0,
            gbs_served: false,
        }];
        assert!(compute_sinr(&[1.0], &gains, &users, &p).is_err());
        assert!(compute_sinr(&[1.0, 1.0], &gains, &[users[0]; 2], &p).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p: ChannelParams<f32> = ChannelParams {
            noise_power: 1.0,
            ..ChannelParams::default()
        };
        let gains = Matrix::from_rows(&[vec![2.0f32]]);
        let r = compute_sinr(
            &[0.5f32],
            &gains,
            &[UserLink {
                demand: 1.0,
                gbs_served: false,
            }],
            &p,
        )
        .unwrap();
        assert_eq!(r.sinr.get(0, 0), 1.0f32);
    }
}
