//! Back-of-envelope protocol overhead.

/// Application header carried by every data packet.
pub const HEADER_BYTES: f64 = 46.0;
/// Rate-control messages, kbps per overlay link per session.
pub const RATE_CONTROL_KBPS: f64 = 0.2;
/// Link-state reports, kbps per overlay link per session.
pub const LINK_STATE_KBPS: f64 = 0.158;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadConfig {
    pub overlay_links: usize,
    pub sessions: usize,
    pub payload_bytes: f64,
    /// Aggregate data traffic the control overhead is compared against.
    pub data_kbps: f64,
}

impl Default for OverheadConfig {
    fn default() -> Self {
        Self {
            overlay_links: 0,
            sessions: 0,
            payload_bytes: 1000.0,
            data_kbps: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadEstimate {
    /// Header bytes over total packet bytes.
    pub packet_overhead: f64,
    pub control_kbps_per_link_session: f64,
    pub control_kbps: f64,
    /// `control_kbps / data_kbps`, or 0 without data.
    pub control_fraction: f64,
}

impl OverheadEstimate {
    pub fn total_fraction(&self) -> f64 {
        self.packet_overhead + self.control_fraction
    }
}

pub fn estimate_overhead(cfg: &OverheadConfig) -> OverheadEstimate {
    let per = RATE_CONTROL_KBPS + LINK_STATE_KBPS;
    let control_kbps = per * cfg.overlay_links as f64 * cfg.sessions as f64;
    OverheadEstimate {
        packet_overhead: HEADER_BYTES / (HEADER_BYTES + cfg.payload_bytes),
        control_kbps_per_link_session: per,
        control_kbps,
        control_fraction: if cfg.data_kbps > 0.0 {
            control_kbps / cfg.data_kbps
        } else {
            0.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_party_mesh() {
        let est = estimate_overhead(&OverheadConfig {
            overlay_links: 12,
            sessions: 4,
            ..Default::default()
        });
        assert_eq!(est.control_kbps_per_link_session, 0.358);
        assert!((est.control_kbps - 17.184).abs() < 1e-9);
        assert!((est.packet_overhead - 46.0 / 1046.0).abs() < 1e-15);
        assert_eq!(est.control_fraction, 0.0);
    }

    #[test]
    fn no_links_no_control() {
        let est = estimate_overhead(&OverheadConfig::default());
        assert_eq!(est.control_kbps, 0.0);
    }
}
