use super::{apply_update, smooth, AckContext, CcError, CcState};
use crate::model::{CcParams, LawKind, EPS_POW};
use crate::units::Bandwidth;

/// Instantaneous `f/e` for a baseline law, or `None` if the ack carries no
/// usable feedback yet.
///
/// * queue length: `(q + bτ)/(bτ)`, maximum over hops
/// * delay: `rtt/τ`
/// * RTT gradient: `1 + dθ/dt`
pub fn baseline_feedback(
    kind: LawKind,
    state: &CcState,
    ack: &AckContext,
    params: &CcParams,
) -> Result<Option<f64>, CcError> {
    let tau = params.tau.secs();
    let ratio = match kind {
        LawKind::QueueLenVoltage => {
            let header = ack.int_header.as_ref().ok_or(CcError::MissingInt(kind))?;
            header
                .hops
                .iter()
                .map(|h| {
                    let bdp = h.bandwidth.bytes_per_sec() * tau;
                    (h.qlen as f64 + bdp) / bdp
                })
                .reduce(f64::max)
        }
        LawKind::DelayVoltage => Some(ack.rtt.secs() / tau),
        LawKind::RttGradientCurrent => match (state.prev_rtt, state.t_c_prev) {
            (Some(prev), Some(t_prev)) => {
                let dt = ack.recv_time.secs_since(t_prev);
                (dt > 0.0).then(|| 1.0 + (ack.rtt.secs() - prev.secs()) / dt)
            }
            _ => None,
        },
        LawKind::PowerTcp | LawKind::ThetaPowerTcp => {
            unreachable!("{kind} is not a baseline law")
        }
    };
    Ok(ratio.map(|r| r.max(EPS_POW)))
}

/// Per-ack update for the baseline family. Uses the same reference-window and
/// smoothing machinery as the power law so only the feedback term differs.
pub fn on_ack_baseline(
    kind: LawKind,
    state: &mut CcState,
    ack: &AckContext,
    params: &CcParams,
) -> Result<(f64, Bandwidth), CcError> {
    let cwnd_old = state.cwnd_snapshots.get(ack.seq);
    let dt = state
        .t_c_prev
        .map(|t| ack.recv_time.secs_since(t))
        .filter(|dt| *dt > 0.0);
    match (baseline_feedback(kind, state, ack, params)?, dt) {
        (Some(ratio), Some(dt)) => {
            state.last_norm = ratio;
            state.gamma_smooth =
                smooth(state.gamma_smooth, ratio, dt, params.tau.secs(), params.smoothing);
        }
        _ => state.stale_feedback += 1,
    }
    apply_update(state, cwnd_old, params)?;

    state.prev_rtt = Some(ack.rtt);
    state.t_c_prev = Some(ack.recv_time);
    if let Some(h) = ack.int_header.as_ref() {
        state.prev_int.clone_from(&h.hops);
    }
    state.cwnd_snapshots.update(state.cwnd, ack.seq, ack.snd_nxt);
    Ok((state.cwnd, state.rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{IntHeader, IntHopRecord};
    use crate::units::{Duration, SimTime};

    fn params() -> CcParams {
        CcParams::new(0.9, Duration::from_micros(20.0), Bandwidth::from_gbps(100.0), 1)
            .unwrap()
            .with_beta(1_000.0)
    }

    fn ack(t_us: f64, rtt_us: f64, q: Option<u64>) -> AckContext {
        AckContext {
            seq: 0,
            snd_nxt: 0,
            recv_time: SimTime::from_secs(t_us * 1e-6),
            rtt: Duration::from_micros(rtt_us),
            int_header: q.map(|q| {
                IntHeader::from_hops(vec![IntHopRecord {
                    port: 0,
                    qlen: q,
                    ts: SimTime::ZERO,
                    tx_bytes: 0,
                    bandwidth: Bandwidth::from_gbps(100.0),
                }])
            }),
        }
    }

    #[test]
    fn queue_law_empty_queue_is_unit_ratio() {
        let p = params();
        let st = CcState::new(&p);
        let r = baseline_feedback(LawKind::QueueLenVoltage, &st, &ack(1.0, 20.0, Some(0)), &p);
        assert_eq!(r.unwrap(), Some(1.0));
        let r = baseline_feedback(LawKind::QueueLenVoltage, &st, &ack(1.0, 20.0, None), &p);
        assert_eq!(r, Err(CcError::MissingInt(LawKind::QueueLenVoltage)));
    }

    #[test]
    fn delay_law_one_bdp_queue_halves() {
        let p = params();
        let st = CcState::new(&p);
        // A queue of bτ adds τ of delay.
        let r = baseline_feedback(LawKind::DelayVoltage, &st, &ack(1.0, 40.0, None), &p)
            .unwrap()
            .unwrap();
        assert!((1.0 / r - 0.5).abs() < 1e-12);
    }

    /// The gradient law cannot tell a standing queue from none: with a flat
    /// RTT the ratio is 1 whatever the queue, so the window only drifts up.
    #[test]
    fn gradient_law_is_oblivious_to_standing_queue() {
        let p = params();
        for standing_rtt in [20.0, 40.0, 200.0] {
            let mut st = CcState::new(&p);
            on_ack_baseline(LawKind::RttGradientCurrent, &mut st, &ack(1.0, standing_rtt, None), &p)
                .unwrap();
            let r = baseline_feedback(
                LawKind::RttGradientCurrent,
                &st,
                &ack(2.0, standing_rtt, None),
                &p,
            )
            .unwrap()
            .unwrap();
            assert!((r - 1.0).abs() < 1e-12);
            let before = st.cwnd;
            on_ack_baseline(LawKind::RttGradientCurrent, &mut st, &ack(2.0, standing_rtt, None), &p)
                .unwrap();
            assert!(st.cwnd >= before);
        }
    }

    #[test]
    fn steep_drain_is_clamped() {
        let p = params();
        let mut st = CcState::new(&p);
        st.prev_rtt = Some(Duration::from_micros(60.0));
        st.t_c_prev = Some(SimTime::from_secs(1e-6));
        let r = baseline_feedback(LawKind::RttGradientCurrent, &st, &ack(2.0, 20.0, None), &p)
            .unwrap()
            .unwrap();
        assert_eq!(r, EPS_POW);
    }
}
