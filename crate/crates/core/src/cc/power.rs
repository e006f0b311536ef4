use serde::{Deserialize, Serialize};

use super::{apply_update, floor_cwnd, smooth, AckContext, CcError, CcState};
use crate::model::{CcParams, LawKind, PowerSample};
use crate::telemetry::IntHopRecord;
use crate::units::Bandwidth;

/// Outcome of one power evaluation over the hops of an ack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPower {
    pub gamma_smooth: f64,
    /// One entry per hop that produced a sample, paired with its hop index.
    pub per_hop: Vec<(usize, PowerSample)>,
    /// Hop index whose normalized power was the maximum.
    pub chosen: Option<usize>,
    /// True when no hop produced a sample and the smoothed value is unchanged.
    pub stale: bool,
}

impl NormPower {
    pub fn max_norm(&self) -> Option<f64> {
        let i = self.chosen?;
        self.per_hop
            .iter()
            .find(|(h, _)| *h == i)
            .map(|(_, s)| s.norm_power)
    }
}

/// Whether two hop lists describe the same path, position by position.
fn same_path(cur: &[IntHopRecord], prev: &[IntHopRecord]) -> bool {
    cur.len() == prev.len() && cur.iter().zip(prev).all(|(a, b)| a.port == b.port)
}

/// Computes normalized power per hop against `prev_int` and smooths the
/// maximum into `state.gamma_smooth`. Does not mutate `state`.
pub fn norm_power(
    ack: &AckContext,
    prev_int: &[IntHopRecord],
    params: &CcParams,
    state: &CcState,
) -> Result<NormPower, CcError> {
    let hops = &ack
        .int_header
        .as_ref()
        .ok_or(CcError::MissingInt(LawKind::PowerTcp))?
        .hops;
    let tau = params.tau.secs();

    let mut per_hop = Vec::with_capacity(hops.len());
    if same_path(hops, prev_int) {
        for (i, (cur, prev)) in hops.iter().zip(prev_int).enumerate() {
            let dt = cur.ts.secs_since(prev.ts);
            if dt <= 0.0 {
                continue;
            }
            let q_dot = (cur.qlen as f64 - prev.qlen as f64) / dt;
            let mu = (cur.tx_bytes as f64 - prev.tx_bytes as f64) / dt;
            let b = cur.bandwidth.bytes_per_sec();
            per_hop.push((i, PowerSample::compute(q_dot, mu, cur.qlen as f64, b, tau, dt)));
        }
    }

    // Compare normalized values; hops can have different bandwidths.
    let best = per_hop
        .iter()
        .copied()
        .fold(None::<(usize, PowerSample)>, |acc, (i, s)| match acc {
            Some((_, a)) if a.norm_power >= s.norm_power => acc,
            _ => Some((i, s)),
        });

    Ok(match best {
        Some((i, s)) => NormPower {
            gamma_smooth: smooth(
                state.gamma_smooth,
                s.norm_power,
                s.dt.secs(),
                tau,
                params.smoothing,
            ),
            per_hop,
            chosen: Some(i),
            stale: false,
        },
        None => NormPower {
            gamma_smooth: state.gamma_smooth,
            per_hop,
            chosen: None,
            stale: true,
        },
    })
}

/// `γ(cwnd_old/Γ + β) + (1-γ)cwnd`, floored at one MSS.
pub fn update_window(
    gamma_smooth: f64,
    cwnd_old: f64,
    cwnd: f64,
    params: &CcParams,
) -> Result<f64, CcError> {
    if !(gamma_smooth > 0.0 && gamma_smooth.is_finite()) {
        return Err(CcError::ZeroPower(gamma_smooth));
    }
    if !(cwnd_old > 0.0) {
        return Err(CcError::NonPositiveWindow(cwnd_old));
    }
    let g = params.gamma;
    Ok(floor_cwnd(
        g * (cwnd_old / gamma_smooth + params.beta) + (1.0 - g) * cwnd,
    ))
}

/// Full per-ack procedure for the telemetry-driven law.
pub fn on_ack_powertcp(
    state: &mut CcState,
    ack: &AckContext,
    params: &CcParams,
) -> Result<(f64, Bandwidth), CcError> {
    let header = ack
        .int_header
        .as_ref()
        .ok_or(CcError::MissingInt(LawKind::PowerTcp))?;
    let cwnd_old = state.cwnd_snapshots.get(ack.seq);
    let np = norm_power(ack, &state.prev_int, params, state)?;
    if np.stale {
        state.stale_feedback += 1;
    } else if let Some(v) = np.max_norm() {
        state.last_norm = v;
    }
    state.gamma_smooth = np.gamma_smooth;
    apply_update(state, cwnd_old, params)?;

    state.prev_int.clone_from(&header.hops);
    state.cwnd_snapshots.update(state.cwnd, ack.seq, ack.snd_nxt);
    state.t_c_prev = Some(ack.recv_time);
    state.prev_rtt = Some(ack.rtt);
    Ok((state.cwnd, state.rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MSS;
    use crate::telemetry::IntHeader;
    use crate::units::{Duration, SimTime};
    use proptest::prelude::*;

    const B: f64 = 12.5e9;

    fn params(beta: f64) -> CcParams {
        CcParams::new(0.9, Duration::from_micros(20.0), Bandwidth::from_bytes_per_sec(B), 1)
            .unwrap()
            .with_beta(beta)
    }

    fn hop(port: u32, qlen: u64, ts_us: f64, tx: u64) -> IntHopRecord {
        IntHopRecord {
            port,
            qlen,
            ts: SimTime::from_secs(ts_us * 1e-6),
            tx_bytes: tx,
            bandwidth: Bandwidth::from_bytes_per_sec(B),
        }
    }

    fn ack(seq: u64, snd_nxt: u64, hops: Vec<IntHopRecord>) -> AckContext {
        AckContext {
            seq,
            snd_nxt,
            recv_time: SimTime::ZERO,
            rtt: Duration::from_micros(20.0),
            int_header: Some(IntHeader::from_hops(hops)),
        }
    }

    #[test]
    fn hand_computed_power_sample() {
        let p = params(0.0);
        let st = CcState::new(&p);
        let prev = [hop(0, 10_000, 0.0, 0)];
        let a = ack(0, 0, vec![hop(0, 20_000, 10.0, 125_000)]);
        let np = norm_power(&a, &prev, &p, &st).unwrap();
        let s = np.per_hop[0].1;
        assert!((s.dt.secs() - 10e-6).abs() < 1e-18);
        assert!((s.current_lambda - 13.5e9).abs() < 1e-3);
        assert!((s.voltage_nu - 270_000.0).abs() < 1e-9);
        assert!((s.power_gamma - 3.645e15).abs() < 1.0);
        assert!((s.base_power_e - 3.125e15).abs() < 1.0);
        assert!((s.norm_power - 1.1664).abs() < 1e-9);
        assert!((np.gamma_smooth - 1.0832).abs() < 1e-9);
    }

    #[test]
    fn line_rate_empty_queue_is_unit_power() {
        let p = params(0.0);
        let st = CcState::new(&p);
        let prev = [hop(0, 0, 0.0, 0)];
        let a = ack(0, 0, vec![hop(0, 0, 8.0, 100_000)]);
        let np = norm_power(&a, &prev, &p, &st).unwrap();
        assert!((np.max_norm().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stale_hops_are_skipped() {
        let p = params(0.0);
        let mut st = CcState::new(&p);
        st.gamma_smooth = 1.3;
        let prev = [hop(0, 0, 5.0, 0)];
        let a = ack(0, 0, vec![hop(0, 0, 5.0, 0)]);
        let np = norm_power(&a, &prev, &p, &st).unwrap();
        assert!(np.stale);
        assert_eq!(np.gamma_smooth, 1.3);

        // A path change is treated the same way.
        let a = ack(0, 0, vec![hop(7, 0, 9.0, 0)]);
        assert!(norm_power(&a, &prev, &p, &st).unwrap().stale);
    }

    #[test]
    fn window_examples() {
        let p = params(0.0);
        let w = update_window(1.0832, 250_000.0, 250_000.0, &p).unwrap();
        assert!((w - 232_718.0).abs() < 1.0, "{w}");

        let p = params(5_000.0);
        let w = update_window(1.0, 100_000.0, 100_000.0, &p).unwrap();
        assert!((w - (100_000.0 + 0.9 * 5_000.0)).abs() < 1e-9);

        let p = params(0.0).with_gamma(1.0);
        assert_eq!(update_window(2.0, 80_000.0, 80_000.0, &p).unwrap(), 40_000.0);

        assert!(matches!(update_window(0.0, 1.0, 1.0, &p), Err(CcError::ZeroPower(_))));
        assert_eq!(update_window(1e6, 1_000.0, 1_000.0, &p).unwrap(), MSS);
    }

    #[test]
    fn window_capped_after_power_collapse() {
        // An empty pipe gives near-zero power; the update must not divide the
        // reference window by it unchecked.
        let p = params(2_000.0);
        let mut st = CcState::new(&p);
        let a = ack(0, 10_000, vec![hop(0, 0, 0.0, 0)]);
        on_ack_powertcp(&mut st, &a, &p).unwrap();
        st.gamma_smooth = 1e-9;
        on_ack_powertcp(&mut st, &ack(10_000, 20_000, vec![hop(0, 0, 20.0, 0)]), &p).unwrap();
        assert!(st.cwnd <= B * 20e-6 + 2_000.0 + 1e-6, "{}", st.cwnd);
    }

    #[test]
    fn first_ack_grows_by_gamma_beta() {
        let p = params(2_000.0);
        let mut st = CcState::new(&p);
        let (w, rate) = on_ack_powertcp(&mut st, &ack(0, 250_000, vec![hop(0, 0, 0.0, 0)]), &p).unwrap();
        assert!((w - (250_000.0 + 0.9 * 2_000.0)).abs() < 1e-9);
        assert!((rate.bytes_per_sec() - w / 20e-6).abs() < 1e-3);
    }

    #[test]
    fn missing_int_is_an_error() {
        let p = params(0.0);
        let mut st = CcState::new(&p);
        let mut a = ack(0, 0, vec![]);
        a.int_header = None;
        assert_eq!(
            on_ack_powertcp(&mut st, &a, &p),
            Err(CcError::MissingInt(LawKind::PowerTcp))
        );
    }

    #[test]
    fn fixed_point_with_unit_power() {
        let p = params(0.0);
        let mut st = CcState::new(&p);
        let mut tx = 0;
        for k in 0..10u64 {
            tx += 1_000;
            let a = ack(k * 1_000, 250_000 + k * 1_000, vec![hop(0, 0, 0.08 * (k + 1) as f64, tx)]);
            on_ack_powertcp(&mut st, &a, &p).unwrap();
            assert!((st.cwnd - 250_000.0).abs() < 1e-6);
        }
    }

    /// Two RTT epochs scripted by hand: acks in the second epoch must use the
    /// window recorded at the start of the first, not the current window.
    #[test]
    fn reference_window_comes_from_older_snapshot() {
        let mut p = params(5_000.0).with_gamma(1.0);
        p.cwnd_init = 100_000.0;
        let mut st = CcState::new(&p);
        // Epoch 1 opens at seq 0; snd_nxt is 10_000 so the next epoch key is 10_000.
        let mut a = ack(0, 10_000, vec![hop(0, 0, 0.0, 0)]);
        on_ack_powertcp(&mut st, &a, &p).unwrap();
        let w_epoch1 = st.cwnd;
        assert!((w_epoch1 - 105_000.0).abs() < 1e-9);

        // Congested feedback inside epoch 1 shrinks cwnd.
        a = ack(1_000, 11_000, vec![hop(0, 50_000, 1.0, 0)]);
        on_ack_powertcp(&mut st, &a, &p).unwrap();
        assert!(st.cwnd < w_epoch1);

        // Ack for seq 10_000 opens epoch 2; its reference is w_epoch1 (recorded
        // with key 10_000), not the shrunken current window.
        st.gamma_smooth = 1.0;
        let mut p_frozen = p;
        p_frozen.smoothing = crate::model::Smoothing::Frozen;
        a = ack(10_000, 20_000, vec![hop(0, 50_000, 2.0, 12_500)]);
        on_ack_powertcp(&mut st, &a, &p_frozen).unwrap();
        assert!((st.cwnd - (w_epoch1 + 5_000.0)).abs() < 1e-9, "{} vs {}", st.cwnd, w_epoch1);
    }

    proptest! {
        #[test]
        fn window_monotone(
            g1 in 0.01f64..10.0, dg in 0.001f64..5.0,
            w_old in 1_000.0f64..1e7, dw in 1.0f64..1e6,
            w in 1_000.0f64..1e7, beta in 0.0f64..1e5, gamma in 0.05f64..1.0,
        ) {
            let p = params(beta).with_gamma(gamma);
            // Keep away from the floor, where monotonicity is only weak.
            prop_assume!(gamma * (w_old / (g1 + dg)) + (1.0 - gamma) * w > 2.0 * MSS);
            let a = update_window(g1, w_old, w, &p).unwrap();
            let b = update_window(g1 + dg, w_old, w, &p).unwrap();
            prop_assert!(b < a);
            let c = update_window(g1, w_old + dw, w, &p).unwrap();
            prop_assert!(c > a);
        }

        #[test]
        fn window_scale_covariant(
            g in 0.1f64..5.0, w_old in 10_000.0f64..1e6, w in 10_000.0f64..1e6,
            beta in 0.0f64..1e4, k in 1.0f64..100.0,
        ) {
            let p = params(beta);
            let base = update_window(g, w_old, w, &p).unwrap();
            let scaled = update_window(g, k * w_old, k * w, &p.with_beta(k * beta)).unwrap();
            prop_assume!(base > MSS);
            prop_assert!((scaled - k * base).abs() <= 1e-9 * k * base);
        }

        #[test]
        fn argmax_invariant_under_common_scale(
            qs in proptest::collection::vec((0u64..200_000, 0u64..200_000, 1u64..2_000_000), 1..6),
            k in 0.1f64..10.0,
        ) {
            // Scaling every hop's normalized power by k is equivalent to
            // scaling its base power by 1/k.
            let p = params(0.0);
            let st = CcState::new(&p);
            let prev: Vec<_> = qs.iter().enumerate().map(|(i, &(q0, _, _))| hop(i as u32, q0, 0.0, 0)).collect();
            let cur: Vec<_> = qs.iter().enumerate().map(|(i, &(_, q1, tx))| hop(i as u32, q1, 10.0, tx)).collect();
            let np = norm_power(&ack(0, 0, cur), &prev, &p, &st).unwrap();
            let scaled: Vec<f64> = np.per_hop.iter().map(|(_, s)| s.norm_power * k).collect();
            let best_scaled = scaled
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
                    Some((_, a)) if a >= v => acc,
                    _ => Some((i, v)),
                })
                .map(|(i, _)| np.per_hop[i].0);
            prop_assert_eq!(best_scaled, np.chosen);
        }
    }
}
