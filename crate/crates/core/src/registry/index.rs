//! Uniform lat/lon grid keyed by box centroid.
//!
//! Boxes no wider or taller than one cell live in the cell holding their
//! centroid, so any of them that overlaps a query rectangle has its centroid
//! within half a cell of that rectangle. Larger boxes go to an overflow list
//! that every query scans.

use std::collections::HashMap;

use crate::boxes::{BoxId, RestrictedBox};
use crate::geo::{haversine_distance, BoxExtent, Distance, GeoPoint, EARTH_RADIUS_M};

type CellKey = (i32, i32);
type SlotFix = fn(usize, Slot) -> Slot;

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub id: BoxId,
    pub extent: BoxExtent,
    pub centroid: GeoPoint,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Cell(CellKey, usize),
    Oversize(usize),
}

#[derive(Debug)]
pub(crate) struct GridIndex {
    cell_deg: f64,
    cells: HashMap<CellKey, Vec<Entry>>,
    oversize: Vec<Entry>,
    slots: HashMap<BoxId, Slot>,
}

impl GridIndex {
    pub fn new(cell_deg: f64) -> Self {
        assert!(cell_deg.is_finite() && cell_deg > 0.0, "cell size must be positive");
        Self {
            cell_deg,
            cells: HashMap::new(),
            oversize: Vec::new(),
            slots: HashMap::new(),
        }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    fn cell_of(&self, p: GeoPoint) -> CellKey {
        (self.coord_cell(p.lon()), self.coord_cell(p.lat()))
    }

    fn coord_cell(&self, deg: f64) -> i32 {
        (deg / self.cell_deg).floor() as i32
    }

    pub fn insert(&mut self, b: &RestrictedBox) {
        let entry = Entry {
            id: b.id(),
            extent: *b.extent(),
            centroid: b.centroid(),
        };
        let small = entry.extent.width_deg() <= self.cell_deg && entry.extent.height_deg() <= self.cell_deg;
        let slot = if small {
            let key = self.cell_of(entry.centroid);
            let cell = self.cells.entry(key).or_default();
            cell.push(entry);
            Slot::Cell(key, cell.len() - 1)
        } else {
            self.oversize.push(entry);
            Slot::Oversize(self.oversize.len() - 1)
        };
        let previous = self.slots.insert(b.id(), slot);
        debug_assert!(previous.is_none(), "duplicate id in index");
    }

    pub fn remove(&mut self, id: BoxId) -> bool {
        let Some(slot) = self.slots.remove(&id) else {
            return false;
        };
        let (list, pos, fix): (&mut Vec<Entry>, usize, SlotFix) = match slot {
            Slot::Cell(key, pos) => (
                self.cells.get_mut(&key).expect("slot points at a live cell"),
                pos,
                |p, s| match s {
                    Slot::Cell(k, _) => Slot::Cell(k, p),
                    other => other,
                },
            ),
            Slot::Oversize(pos) => (&mut self.oversize, pos, |p, _| Slot::Oversize(p)),
        };
        list.swap_remove(pos);
        if let Some(moved) = list.get(pos) {
            let s = self.slots.get_mut(&moved.id).expect("moved entry is indexed");
            *s = fix(pos, *s);
        }
        if let Slot::Cell(key, _) = slot {
            if self.cells.get(&key).is_some_and(Vec::is_empty) {
                self.cells.remove(&key);
            }
        }
        true
    }

    /// Visits every entry whose extent might overlap `rect`. A superset: callers
    /// must still test overlap exactly.
    pub fn for_each_candidate(&self, rect: &BoxExtent, mut f: impl FnMut(&Entry)) {
        let pad = self.cell_deg / 2.0;
        let lon_cells = (
            self.coord_cell(rect.min_lon() - pad),
            self.coord_cell(rect.max_lon() + pad),
        );
        let lat_cells = (
            self.coord_cell(rect.min_lat() - pad),
            self.coord_cell(rect.max_lat() + pad),
        );
        self.visit_cells(&[lon_cells], lat_cells, &mut f);
        self.oversize.iter().for_each(&mut f);
    }

    /// Ids of boxes whose centroid lies within `radius` of `center` (inclusive).
    pub fn within_radius(&self, center: GeoPoint, radius: Distance) -> Vec<BoxId> {
        let mut out = Vec::new();
        let mut check = |e: &Entry| {
            if haversine_distance(center, e.centroid) <= radius {
                out.push(e.id);
            }
        };

        let angular = radius.meters() / EARTH_RADIUS_M;
        // small relative margin keeps the cell window a strict superset under rounding
        let d_lat = angular.to_degrees() * (1.0 + 1e-9) + 1e-9;
        let lat_lo = (center.lat() - d_lat).max(-90.0);
        let lat_hi = (center.lat() + d_lat).min(90.0);
        let lat_cells = (self.coord_cell(lat_lo), self.coord_cell(lat_hi));

        let phi = center.lat().to_radians();
        let reaches_pole = angular >= std::f64::consts::FRAC_PI_2 - phi.abs() || angular >= std::f64::consts::FRAC_PI_2;
        let lon_cells = if reaches_pole {
            vec![(self.coord_cell(-180.0), self.coord_cell(180.0))]
        } else {
            let d_lon = (angular.sin() / phi.cos()).min(1.0).asin().to_degrees() * (1.0 + 1e-9) + 1e-9;
            let (lo, hi) = (center.lon() - d_lon, center.lon() + d_lon);
            if hi - lo >= 360.0 {
                vec![(self.coord_cell(-180.0), self.coord_cell(180.0))]
            } else {
                let mut ranges = vec![(self.coord_cell(lo.max(-180.0)), self.coord_cell(hi.min(180.0)))];
                if lo < -180.0 {
                    ranges.push((self.coord_cell(lo + 360.0), self.coord_cell(180.0)));
                }
                if hi > 180.0 {
                    ranges.push((self.coord_cell(-180.0), self.coord_cell(hi - 360.0)));
                }
                ranges
            }
        };

        self.visit_cells(&lon_cells, lat_cells, &mut check);
        self.oversize.iter().for_each(&mut check);
        out
    }

    fn visit_cells(&self, lon_ranges: &[(i32, i32)], lat: (i32, i32), f: &mut impl FnMut(&Entry)) {
        let span = |(lo, hi): (i32, i32)| (hi as i64 - lo as i64 + 1).max(0) as u64;
        let window: u64 = lon_ranges.iter().map(|&r| span(r)).sum::<u64>() * span(lat);
        let in_window = |&(x, y): &CellKey| {
            (lat.0..=lat.1).contains(&y) && lon_ranges.iter().any(|&(lo, hi)| (lo..=hi).contains(&x))
        };
        if window > self.cells.len() as u64 {
            for (key, cell) in &self.cells {
                if in_window(key) {
                    cell.iter().for_each(&mut *f);
                }
            }
        } else {
            for &(lo, hi) in lon_ranges {
                for x in lo..=hi {
                    for y in lat.0..=lat.1 {
                        if let Some(cell) = self.cells.get(&(x, y)) {
                            cell.iter().for_each(&mut *f);
                        }
                    }
                }
            }
        }
    }
}
