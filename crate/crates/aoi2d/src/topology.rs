//! Sensor layouts (regular grid with tiers, star), per-area capacity
//! allocation, and point-of-interest geometry for the evaluation scenarios.

use serde::{Deserialize, Serialize};

use crate::calculus::SensorLink;
use crate::channel::{aloha_budget, ChannelModel};
use crate::error::{Error, Result};
use crate::kernel::Position;

/// Channel kind shared by all sensors of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridChannel {
    /// Independent M|M|1 queues, each with utilization `rho`.
    Mm1 { rho: f64 },
    /// Slotted ALOHA with the throughput-optimal per-station budget.
    Aloha { floor_mode: bool },
}

/// Convention for the per-area sensor count `N` used to split capacity.
///
/// `Area` counts one sensor per grid cell of the area, `N = round((A/d)^2)`.
/// `Padded` also charges for the partial cells along the area boundary,
/// `N = (A/d + 1)^2`; this is the convention behind the reference numbers of
/// the grid studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    #[default]
    Area,
    Padded,
}

/// A regular sensor grid filling a square area, observed from its center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Sensor spacing.
    pub d: f64,
    /// Side length of the square area.
    pub area_side: f64,
    /// Number of nearest sensors the monitor uses.
    pub s_select: usize,
    /// Total per-area service capacity (M|M|1 mode only).
    pub capacity: f64,
    pub channel: GridChannel,
    pub count_mode: CountMode,
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::Config(format!("grid spacing must be > 0, got {}", self.d)));
        }
        if !(self.area_side > 0.0 && self.area_side.is_finite()) {
            return Err(Error::Config(format!("area side must be > 0, got {}", self.area_side)));
        }
        if self.s_select == 0 {
            return Err(Error::Config("s_select must be at least 1".into()));
        }
        if let GridChannel::Mm1 { rho } = self.channel {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!("rho must be in (0, 1), got {rho}")));
            }
            if !(self.capacity > 0.0) {
                return Err(Error::Config(format!("capacity must be > 0, got {}", self.capacity)));
            }
        }
        Ok(())
    }

    /// Number of sensors inside the area, one per fully covered cell along
    /// each axis.
    pub fn n_in_area(&self) -> usize {
        let per_axis = sensor_offsets(self.d, self.area_side).len();
        per_axis * per_axis
    }

    /// Effective per-area sensor count for capacity splitting, per the
    /// configured [`CountMode`]. Not necessarily an integer in `Padded` mode.
    pub fn n_effective(&self) -> f64 {
        let cells = self.area_side / self.d;
        match self.count_mode {
            CountMode::Area => (cells * cells).round().max(1.0),
            CountMode::Padded => (cells + 1.0) * (cells + 1.0),
        }
    }
}

/// One grid sensor with its tier label and distance to the point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSite {
    pub position: Position,
    /// 1 for the 4 nearest sensors, 2 for the next 12, 3 for the next 20,
    /// 4 for anything beyond.
    pub tier: u8,
    pub distance: f64,
}

/// Per-axis sensor coordinates relative to the point of interest: the lattice
/// `d (i + 1/2)` for all `i` with the sensor inside the area.
fn sensor_offsets(d: f64, area_side: f64) -> Vec<f64> {
    let half = area_side / 2.0;
    let mut offsets = Vec::new();
    let mut i = 0i64;
    loop {
        let off = d * (i as f64 + 0.5);
        if off > half {
            break;
        }
        offsets.push(off);
        offsets.push(-off);
        i += 1;
    }
    offsets.sort_by(|a, b| a.total_cmp(b));
    offsets
}

fn tier_of_rank(rank: usize) -> u8 {
    match rank {
        0..=3 => 1,
        4..=15 => 2,
        16..=35 => 3,
        _ => 4,
    }
}

/// The `s_select` nearest grid sensors seen from the point of interest at the
/// area center, sorted by distance and labelled with their tier.
pub fn grid_layout(spec: &GridSpec) -> Result<Vec<GridSite>> {
    spec.validate()?;
    let n = spec.n_in_area();
    if spec.s_select > n {
        return Err(Error::Config(format!(
            "s_select = {} exceeds the {} sensors in the area",
            spec.s_select, n
        )));
    }
    let offsets = sensor_offsets(spec.d, spec.area_side);
    let mut sites: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    for &x in &offsets {
        for &y in &offsets {
            sites.push(((x * x + y * y).sqrt(), x, y));
        }
    }
    // deterministic order: by distance, then by coordinates
    sites.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2))
    });
    Ok(sites
        .into_iter()
        .take(spec.s_select)
        .enumerate()
        .map(|(rank, (dist, x, y))| GridSite {
            position: Position::xy(x, y),
            tier: tier_of_rank(rank),
            distance: dist,
        })
        .collect())
}

/// Per-sensor channel parameters under an even split of the per-area
/// capacity among `n_effective` sensors.
pub fn capacity_split(spec: &GridSpec) -> Result<ChannelModel> {
    spec.validate()?;
    let n = spec.n_effective();
    match spec.channel {
        GridChannel::Mm1 { rho } => {
            let mu_i = spec.capacity / n;
            ChannelModel::mm1(rho * mu_i, mu_i)
        }
        GridChannel::Aloha { floor_mode } => {
            let q = aloha_budget(n)?;
            if floor_mode {
                ChannelModel::slotted_aloha(q)
            } else {
                ChannelModel::slotted_aloha_continuous(q)
            }
        }
    }
}

/// The selected grid sensors as ready-to-compose links, plus the point of
/// interest.
pub fn grid_links(spec: &GridSpec) -> Result<(Vec<SensorLink>, Position)> {
    let channel = capacity_split(spec)?;
    let sites = grid_layout(spec)?;
    let links = sites
        .into_iter()
        .enumerate()
        .map(|(index, s)| SensorLink { index, position: s.position, channel: channel.clone() })
        .collect();
    Ok((links, Position::xy(0.0, 0.0)))
}

/// Four sensors around a center sensor, sharing a total service capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarSpec {
    /// Leaf distance from the center.
    pub d: f64,
    /// Total service capacity to split.
    pub mu_total: f64,
    /// Capacity allocated to the center sensor; the four leaves share the
    /// remainder evenly.
    pub mu_center: f64,
    /// Arrival utilization on each M|M|1 link.
    pub rho: f64,
}

/// Sensor links of the star, observed from the first leaf. Links with zero
/// allocated rate are dropped.
pub fn star_layout(spec: &StarSpec) -> Result<(Vec<SensorLink>, Position)> {
    if !(spec.d >= 0.0 && spec.d.is_finite()) {
        return Err(Error::Config(format!("star distance must be >= 0, got {}", spec.d)));
    }
    if !(spec.mu_total > 0.0) {
        return Err(Error::Config(format!("mu_total must be > 0, got {}", spec.mu_total)));
    }
    if spec.mu_center < 0.0 || spec.mu_center > spec.mu_total {
        return Err(Error::Config(format!(
            "mu_center must be in [0, mu_total = {}], got {}",
            spec.mu_total, spec.mu_center
        )));
    }
    if !(spec.rho > 0.0 && spec.rho < 1.0) {
        return Err(Error::Config(format!("rho must be in (0, 1), got {}", spec.rho)));
    }
    let mu_leaf = (spec.mu_total - spec.mu_center) / 4.0;
    let d = spec.d;
    let placed = [
        (Position::xy(0.0, 0.0), spec.mu_center), // center
        (Position::xy(d, 0.0), mu_leaf),          // viewpoint leaf
        (Position::xy(0.0, d), mu_leaf),
        (Position::xy(-d, 0.0), mu_leaf),
        (Position::xy(0.0, -d), mu_leaf),
    ];
    let mut links = Vec::new();
    for (position, mu) in placed {
        if mu <= 0.0 {
            continue;
        }
        links.push(SensorLink {
            index: links.len(),
            position,
            channel: ChannelModel::mm1(spec.rho * mu, mu)?,
        });
    }
    Ok((links, Position::xy(d, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{ccdf_2d_min, ccdf_2d_single};
    use crate::kernel::{Kernel, LengthScale};
    use approx::assert_relative_eq;

    fn grid(d: f64, s_select: usize) -> GridSpec {
        GridSpec {
            d,
            area_side: 300.0,
            s_select,
            capacity: 10.0,
            channel: GridChannel::Mm1 { rho: 0.53 },
            count_mode: CountMode::Area,
        }
    }

    #[test]
    fn n_for_divisible_spacing() {
        assert_eq!(grid(50.0, 16).n_in_area(), 36);
        assert_relative_eq!(grid(50.0, 16).n_effective(), 36.0, epsilon = 1e-12);
        // one cell only; the lattice has a sensor in each area corner
        assert_relative_eq!(grid(300.0, 1).n_effective(), 1.0, epsilon = 1e-12);
        assert_eq!(grid(300.0, 1).n_in_area(), 4);
        // d halved quadruples N
        assert_eq!(grid(25.0, 16).n_in_area(), 4 * 36);
    }

    #[test]
    fn padded_count() {
        let mut g = grid(50.0, 16);
        g.count_mode = CountMode::Padded;
        assert_relative_eq!(g.n_effective(), 49.0, epsilon = 1e-12);
        g.d = 40.0;
        assert_relative_eq!(g.n_effective(), 72.25, epsilon = 1e-12);
    }

    #[test]
    fn tier_distances() {
        let sites = grid_layout(&grid(34.0, 36)).unwrap();
        let r1 = 34.0 / 2.0f64.sqrt();
        for s in &sites[..4] {
            assert_eq!(s.tier, 1);
            assert_relative_eq!(s.distance, r1, epsilon = 1e-9);
        }
        let mut tier2: Vec<f64> = sites[4..16].iter().map(|s| s.distance).collect();
        tier2.sort_by(|a, b| a.total_cmp(b));
        for s in &sites[4..16] {
            assert_eq!(s.tier, 2);
        }
        // 8 at sqrt(5) d / sqrt(2), then 4 at 3 d / sqrt(2)
        for v in &tier2[..8] {
            assert_relative_eq!(*v, 5.0f64.sqrt() * r1, epsilon = 1e-9);
        }
        for v in &tier2[8..] {
            assert_relative_eq!(*v, 3.0 * r1, epsilon = 1e-9);
        }
        for s in &sites[16..36] {
            assert_eq!(s.tier, 3);
        }
    }

    #[test]
    fn tier_aeds_match_reference() {
        let k = Kernel::exponential(1.0, 128.0, LengthScale::Finite(128.0)).unwrap();
        let sites = grid_layout(&grid(34.0, 16)).unwrap();
        let aed1 = k.aed_of_distance(sites[0].distance, 0.0).unwrap();
        assert!((aed1 - 24.0).abs() < 0.05, "tier-1 aed {aed1}");
        let aed2a = k.aed_of_distance(sites[4].distance, 0.0).unwrap();
        let aed2b = k.aed_of_distance(sites[15].distance, 0.0).unwrap();
        assert!((aed2a - 53.8).abs() < 0.05, "tier-2 aed {aed2a}");
        assert!((aed2b - 72.1).abs() < 0.05, "tier-2 aed {aed2b}");
    }

    #[test]
    fn s_select_larger_than_grid_is_rejected() {
        assert!(grid_layout(&grid(50.0, 37)).is_err());
        assert!(grid_layout(&grid(50.0, 36)).is_ok());
    }

    #[test]
    fn capacity_split_examples() {
        let c = capacity_split(&grid(50.0, 16)).unwrap();
        match c {
            ChannelModel::Mm1 { lambda, mu } => {
                assert_relative_eq!(mu, 10.0 / 36.0, epsilon = 1e-12);
                assert_relative_eq!(lambda, 0.14722, max_relative = 1e-4);
                // conservation over the area
                assert_relative_eq!(mu * 36.0, 10.0, epsilon = 1e-12);
            }
            other => panic!("expected Mm1, got {other:?}"),
        }

        let single = capacity_split(&grid(300.0, 1)).unwrap();
        match single {
            ChannelModel::Mm1 { mu, .. } => assert_relative_eq!(mu, 10.0, epsilon = 1e-12),
            other => panic!("expected Mm1, got {other:?}"),
        }

        let mut g = grid(50.0, 16);
        g.channel = GridChannel::Aloha { floor_mode: true };
        match capacity_split(&g).unwrap() {
            ChannelModel::SlottedAloha { q, .. } => {
                assert_relative_eq!(q, 0.010219, max_relative = 1e-4);
            }
            other => panic!("expected SlottedAloha, got {other:?}"),
        }
    }

    #[test]
    fn tier1_min_ccdf_is_fourth_power_of_one_factor() {
        let k = Kernel::exponential(1.0, 128.0, LengthScale::Finite(128.0)).unwrap();
        let (links, poi) = grid_links(&grid(34.0, 4)).unwrap();
        let min4 = ccdf_2d_min(&links, &k, &poi).unwrap();
        let one = ccdf_2d_single(&links[0], &k, &poi).unwrap();
        for y in [25.0, 30.0, 60.0, 120.0] {
            assert_relative_eq!(min4.eval(y), one.eval(y).powi(4), epsilon = 1e-12);
        }
    }

    #[test]
    fn star_geometry_from_first_leaf() {
        let spec = StarSpec { d: 5.0, mu_total: 1.0, mu_center: 0.2, rho: 0.53 };
        let (links, viewpoint) = star_layout(&spec).unwrap();
        assert_eq!(links.len(), 5);
        let mut dists: Vec<f64> =
            links.iter().map(|l| l.position.distance(&viewpoint).unwrap()).collect();
        dists.sort_by(|a, b| a.total_cmp(b));
        let expected = [0.0, 5.0, 5.0 * 2.0f64.sqrt(), 5.0 * 2.0f64.sqrt(), 10.0];
        for (got, want) in dists.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        // even split example
        for l in &links {
            match l.channel {
                ChannelModel::Mm1 { mu, .. } => assert_relative_eq!(mu, 0.2, epsilon = 1e-12),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn star_rate_conservation_and_drops() {
        let spec = StarSpec { d: 5.0, mu_total: 1.0, mu_center: 1.0, rho: 0.53 };
        let (links, _) = star_layout(&spec).unwrap();
        assert_eq!(links.len(), 1); // leaves dropped
        let spec = StarSpec { d: 5.0, mu_total: 1.0, mu_center: 0.0, rho: 0.53 };
        let (links, _) = star_layout(&spec).unwrap();
        assert_eq!(links.len(), 4); // center dropped
        let total: f64 = links
            .iter()
            .map(|l| match l.channel {
                ChannelModel::Mm1 { mu, .. } => mu,
                _ => 0.0,
            })
            .sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        assert!(star_layout(&StarSpec { d: 5.0, mu_total: 1.0, mu_center: 1.5, rho: 0.53 })
            .is_err());
    }

    #[test]
    fn pooled_star_at_zero_distance() {
        let spec = StarSpec { d: 0.0, mu_total: 1.0, mu_center: 1.0, rho: 0.53 };
        let (links, viewpoint) = star_layout(&spec).unwrap();
        assert_eq!(links.len(), 1);
        assert_relative_eq!(
            links[0].position.distance(&viewpoint).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }
}
