use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::field::{FieldKind, PerField};
use crate::error::{parse_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteKind {
    #[serde(rename = "SLICEL")]
    Slicel,
    #[serde(rename = "SLICEM")]
    Slicem,
    #[serde(rename = "DSPCOL")]
    Dspcol,
    #[serde(rename = "BRAMCOL")]
    Bramcol,
    #[serde(rename = "IOCOL")]
    Iocol,
}

impl SiteKind {
    pub const ALL: [SiteKind; 5] = [
        SiteKind::Slicel,
        SiteKind::Slicem,
        SiteKind::Dspcol,
        SiteKind::Bramcol,
        SiteKind::Iocol,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SiteKind::Slicel => "SLICEL",
            SiteKind::Slicem => "SLICEM",
            SiteKind::Dspcol => "DSPCOL",
            SiteKind::Bramcol => "BRAMCOL",
            SiteKind::Iocol => "IOCOL",
        }
    }

    pub fn is_slice(self) -> bool {
        matches!(self, SiteKind::Slicel | SiteKind::Slicem)
    }

    /// Capacities used when a device file carries no `cap` line for the kind.
    pub fn default_capacity(self) -> PerField<f64> {
        let mut c = PerField::zeros();
        match self {
            SiteKind::Slicel => {
                c[FieldKind::Lutl] = 8.0;
                c[FieldKind::Ff] = 16.0;
                c[FieldKind::Carry] = 1.0;
            }
            SiteKind::Slicem => {
                c[FieldKind::Lutl] = 8.0;
                c[FieldKind::LutmAl] = 8.0;
                c[FieldKind::Ff] = 16.0;
                c[FieldKind::Carry] = 1.0;
            }
            SiteKind::Dspcol => c[FieldKind::Dsp] = 1.0,
            SiteKind::Bramcol => c[FieldKind::Bram] = 1.0,
            SiteKind::Iocol => {}
        }
        c
    }
}

impl fmt::Display for SiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SiteKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SiteKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown site kind `{s}`"))
    }
}

/// Axis-aligned rectangle in site units, `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// Manhattan distance from a point to the nearest point of the rectangle.
    pub fn manhattan_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 - x).max(0.0).max(x - self.x1);
        let dy = (self.y0 - y).max(0.0).max(y - self.y1);
        dx + dy
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x0, self.x1), y.clamp(self.y0, self.y1))
    }
}

/// Column-structured FPGA fabric.
///
/// Site `(x, y)` covers `[x, x+1) x [y, y+1)`; every site of a column shares
/// the column's kind. Clock regions tile the grid as `cr_rows x cr_cols`
/// integer partitions, and each clock region splits into half columns of two
/// site columns by half the region height.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub width: usize,
    pub height: usize,
    pub columns: Vec<SiteKind>,
    pub cr_rows: usize,
    pub cr_cols: usize,
    pub cr_limit: usize,
    pub hc_limit: usize,
    capacity: [PerField<f64>; 5],
    explicit_cap: [bool; 5],
    cr_x_bounds: Vec<usize>,
    cr_y_bounds: Vec<usize>,
}

pub const DEFAULT_CR_LIMIT: usize = 24;
pub const DEFAULT_HC_LIMIT: usize = 12;

fn partition(len: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|i| i * len / parts).collect()
}

fn locate(bounds: &[usize], v: usize) -> usize {
    // bounds is sorted with bounds[0] == 0; last partition whose start <= v
    match bounds.binary_search(&v) {
        Ok(i) => i.min(bounds.len() - 2),
        Err(i) => i - 1,
    }
}

impl Device {
    pub fn new(
        width: usize,
        height: usize,
        columns: Vec<SiteKind>,
        cr_rows: usize,
        cr_cols: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config("device dimensions must be positive".into()));
        }
        if columns.len() != width {
            return Err(Error::Config(format!(
                "expected {width} column kinds, got {}",
                columns.len()
            )));
        }
        if cr_rows == 0 || cr_cols == 0 || cr_rows > height || cr_cols > width {
            return Err(Error::Config(format!(
                "clock region grid {cr_rows}x{cr_cols} does not fit a {width}x{height} device"
            )));
        }
        Ok(Device {
            width,
            height,
            columns,
            cr_rows,
            cr_cols,
            cr_limit: DEFAULT_CR_LIMIT,
            hc_limit: DEFAULT_HC_LIMIT,
            capacity: SiteKind::ALL.map(SiteKind::default_capacity),
            explicit_cap: [false; 5],
            cr_x_bounds: partition(width, cr_cols),
            cr_y_bounds: partition(height, cr_rows),
        })
    }

    pub fn with_limits(mut self, cr_limit: usize, hc_limit: usize) -> Self {
        self.cr_limit = cr_limit;
        self.hc_limit = hc_limit;
        self
    }

    pub fn set_capacity(&mut self, kind: SiteKind, cap: PerField<f64>) {
        self.capacity[kind.index()] = cap;
        self.explicit_cap[kind.index()] = true;
    }

    pub fn capacity(&self, kind: SiteKind) -> &PerField<f64> {
        &self.capacity[kind.index()]
    }

    pub fn site_kind(&self, x: usize) -> SiteKind {
        self.columns[x]
    }

    pub fn num_regions(&self) -> usize {
        self.cr_rows * self.cr_cols
    }

    pub fn region_of_site(&self, x: usize, y: usize) -> usize {
        let c = locate(&self.cr_x_bounds, x);
        let r = locate(&self.cr_y_bounds, y);
        r * self.cr_cols + c
    }

    /// Region column / row index for continuous coordinates.
    pub fn region_col_of(&self, x: f64) -> usize {
        locate(&self.cr_x_bounds, clamp_site(x, self.width))
    }

    pub fn region_row_of(&self, y: f64) -> usize {
        locate(&self.cr_y_bounds, clamp_site(y, self.height))
    }

    pub fn region_of_point(&self, x: f64, y: f64) -> usize {
        self.region_row_of(y) * self.cr_cols + self.region_col_of(x)
    }

    pub fn region_rect(&self, region: usize) -> Rect {
        let (r, c) = (region / self.cr_cols, region % self.cr_cols);
        Rect {
            x0: self.cr_x_bounds[c] as f64,
            x1: self.cr_x_bounds[c + 1] as f64,
            y0: self.cr_y_bounds[r] as f64,
            y1: self.cr_y_bounds[r + 1] as f64,
        }
    }

    pub fn region_site_bounds(&self, region: usize) -> (usize, usize, usize, usize) {
        let (r, c) = (region / self.cr_cols, region % self.cr_cols);
        (
            self.cr_x_bounds[c],
            self.cr_x_bounds[c + 1],
            self.cr_y_bounds[r],
            self.cr_y_bounds[r + 1],
        )
    }

    pub fn num_half_column_cols(&self) -> usize {
        self.width.div_ceil(2)
    }

    pub fn num_half_columns(&self) -> usize {
        self.num_half_column_cols() * self.cr_rows * 2
    }

    /// Half column containing site `(x, y)`: two site columns wide and half a
    /// clock region tall.
    pub fn half_column_of_site(&self, x: usize, y: usize) -> usize {
        let row = locate(&self.cr_y_bounds, y);
        let (y0, y1) = (self.cr_y_bounds[row], self.cr_y_bounds[row + 1]);
        let mid = y0 + (y1 - y0) / 2;
        let half = usize::from(y >= mid);
        (row * 2 + half) * self.num_half_column_cols() + x / 2
    }

    /// Area of one resource unit of `field`, in site areas.
    ///
    /// The site kind with the largest capacity for the field defines a full
    /// site; sites with less capacity are partially pre-occupied.
    pub fn unit_area(&self, field: FieldKind) -> f64 {
        let best = self
            .capacity
            .iter()
            .map(|c| c[field])
            .fold(0.0_f64, f64::max);
        if best > 0.0 {
            1.0 / best
        } else {
            0.0
        }
    }

    /// Fraction of a site of `kind` unavailable to `field`.
    pub fn static_fraction(&self, kind: SiteKind, field: FieldKind) -> f64 {
        let unit = self.unit_area(field);
        (1.0 - self.capacity(kind)[field] * unit).clamp(0.0, 1.0)
    }

    /// Resource units offered by the whole device per field.
    pub fn total_capacity(&self) -> PerField<f64> {
        let mut total = PerField::zeros();
        for &kind in &self.columns {
            for f in FieldKind::ALL {
                total[f] += self.capacity(kind)[f] * self.height as f64;
            }
        }
        total
    }

    /// Resource units offered by one clock region per field.
    pub fn region_capacity(&self, region: usize) -> PerField<f64> {
        let (x0, x1, y0, y1) = self.region_site_bounds(region);
        let rows = (y1 - y0) as f64;
        let mut total = PerField::zeros();
        for &kind in &self.columns[x0..x1] {
            for f in FieldKind::ALL {
                total[f] += self.capacity(kind)[f] * rows;
            }
        }
        total
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize, usize, usize, usize, usize)> = None;
        let mut columns: Vec<Option<SiteKind>> = Vec::new();
        let mut caps: Vec<(SiteKind, PerField<f64>)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "device" => {
                    if header.is_some() {
                        return Err(parse_err(line_no, "duplicate device header"));
                    }
                    if tok.len() != 7 {
                        return Err(parse_err(
                            line_no,
                            "expected `device W H CRrows CRcols crLimit hcLimit`",
                        ));
                    }
                    let n: Vec<usize> = tok[1..]
                        .iter()
                        .map(|t| parse_num::<usize>(line_no, t))
                        .collect::<Result<_>>()?;
                    header = Some((n[0], n[1], n[2], n[3], n[4], n[5]));
                    columns = vec![None; n[0]];
                }
                "col" => {
                    let (w, h, ..) =
                        header.ok_or_else(|| parse_err(line_no, "`col` before device header"))?;
                    if tok.len() != 3 {
                        return Err(parse_err(line_no, "expected `col <x> <kind>`"));
                    }
                    let x = parse_num::<i64>(line_no, tok[1])?;
                    if x < 0 || x as usize >= w {
                        return Err(Error::Bounds {
                            line: line_no,
                            what: "column",
                            x,
                            y: 0,
                            width: w,
                            height: h,
                        });
                    }
                    let kind = tok[2].parse::<SiteKind>().map_err(|e| parse_err(line_no, e))?;
                    columns[x as usize] = Some(kind);
                }
                "cap" => {
                    if tok.len() != 2 + FieldKind::COUNT {
                        return Err(parse_err(
                            line_no,
                            "expected `cap <kind> <lutl> <lutm-al> <ff> <carry> <dsp> <bram>`",
                        ));
                    }
                    let kind = tok[1].parse::<SiteKind>().map_err(|e| parse_err(line_no, e))?;
                    let mut cap = PerField::zeros();
                    for (f, t) in FieldKind::ALL.into_iter().zip(&tok[2..]) {
                        let v = parse_num::<f64>(line_no, t)?;
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(parse_err(line_no, "capacity must be non-negative"));
                        }
                        cap[f] = v;
                    }
                    caps.push((kind, cap));
                }
                other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
            }
        }

        let (w, h, crr, crc, crl, hcl) =
            header.ok_or_else(|| parse_err(1, "missing device header"))?;
        let columns = columns
            .into_iter()
            .enumerate()
            .map(|(x, k)| k.ok_or_else(|| parse_err(0, format!("column {x} has no kind"))))
            .collect::<Result<Vec<_>>>()?;
        let mut dev = Device::new(w, h, columns, crr, crc)?.with_limits(crl, hcl);
        for (kind, cap) in caps {
            dev.set_capacity(kind, cap);
        }
        Ok(dev)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "device {} {} {} {} {} {}",
            self.width, self.height, self.cr_rows, self.cr_cols, self.cr_limit, self.hc_limit
        );
        for (x, k) in self.columns.iter().enumerate() {
            let _ = writeln!(s, "col {x} {k}");
        }
        for kind in SiteKind::ALL {
            if self.explicit_cap[kind.index()] {
                let c = self.capacity(kind);
                let _ = write!(s, "cap {kind}");
                for f in FieldKind::ALL {
                    let _ = write!(s, " {}", c[f]);
                }
                s.push('\n');
            }
        }
        s
    }
}

fn clamp_site(v: f64, len: usize) -> usize {
    if v <= 0.0 {
        0
    } else {
        (v.floor() as usize).min(len - 1)
    }
}

pub(crate) fn parse_num<T: FromStr>(line: usize, tok: &str) -> Result<T> {
    tok.parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))
}
