//! Plot-ready CSV emission. Every file starts with a comment header
//! carrying the tool version and the resolved run configuration, enough
//! to rerun the identical computation; all reals are serialized with 17
//! significant digits.

use std::io::Write;

use crate::error::Result;
use crate::profile::{Event, PathWord, Profile};
use crate::qseries::QTable;
use crate::senescence::LimitCurvePoint;
use crate::sim::SenescenceState;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits, scientific notation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comment-line metadata header written at the top of every output file.
#[derive(Debug, Clone, Default)]
pub struct MetaHeader {
    entries: Vec<(String, String)>,
}

impl MetaHeader {
    pub fn new() -> Self {
        let mut m = MetaHeader::default();
        m.entries
            .push(("tool".into(), format!("aldous-shields v{TOOL_VERSION}")));
        m
    }

    pub fn entry(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

/// `depth,count`
pub fn write_profile_csv<W: Write>(w: &mut W, profile: &Profile, meta: &MetaHeader) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "depth,count")?;
    for (depth, count) in profile.iter() {
        writeln!(w, "{depth},{count}")?;
    }
    Ok(())
}

/// `time,depth`
pub fn write_events_csv<W: Write>(w: &mut W, events: &[Event], meta: &MetaHeader) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "time,depth")?;
    for e in events {
        writeln!(w, "{},{}", fmt_real(e.time), e.depth)?;
    }
    Ok(())
}

/// `depth,path_bits` with the path as a 0/1 string (empty for the root).
pub fn write_tree_csv<W: Write>(w: &mut W, external: &[PathWord], meta: &MetaHeader) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "depth,path_bits")?;
    for v in external {
        writeln!(w, "{},{}", v.depth(), v)?;
    }
    Ok(())
}

/// `k,a_k,b_k` plus a trailing `# b_inf=<value>` comment line.
pub fn write_qtable_csv<W: Write>(w: &mut W, table: &QTable, meta: &MetaHeader) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "k,a_k,b_k")?;
    for k in 0..=table.kmax() as usize {
        writeln!(w, "{},{},{}", k, fmt_real(table.a[k]), fmt_real(table.b[k]))?;
    }
    writeln!(w, "# b_inf={}", fmt_real(table.b_inf))?;
    Ok(())
}

/// `depth,y_n,mean_count`
pub fn write_mean_csv<W: Write>(
    w: &mut W,
    rows: &[(u32, f64, f64)],
    meta: &MetaHeader,
) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "depth,y_n,mean_count")?;
    for &(n, y, count) in rows {
        writeln!(w, "{},{},{}", n, fmt_real(y), fmt_real(count))?;
    }
    Ok(())
}

/// `i,x_i`
pub fn write_limit_profile_csv<W: Write>(
    w: &mut W,
    rows: &[(i32, f64)],
    meta: &MetaHeader,
) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "i,x_i")?;
    for &(i, x) in rows {
        writeln!(w, "{},{}", i, fmt_real(x))?;
    }
    Ok(())
}

/// `t,L,numerator,denominator`
pub fn write_limit_curve_csv<W: Write>(
    w: &mut W,
    points: &[LimitCurvePoint],
    meta: &MetaHeader,
) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "t,L,numerator,denominator")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_real(p.t),
            fmt_real(p.l),
            fmt_real(p.numerator),
            fmt_real(p.denominator)
        )?;
    }
    Ok(())
}

/// `t,zp,zs,L` for senescence-simulation output.
pub fn write_senescence_csv<W: Write>(
    w: &mut W,
    states: &[SenescenceState],
    meta: &MetaHeader,
) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "t,zp,zs,L")?;
    for s in states {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_real(s.time),
            s.zp,
            s.zs,
            fmt_real(s.fraction())
        )?;
    }
    Ok(())
}

/// `t,L_fit`
pub fn write_fitted_curve_csv<W: Write>(
    w: &mut W,
    rows: &[(f64, f64)],
    meta: &MetaHeader,
) -> Result<()> {
    meta.write_to(w)?;
    writeln!(w, "t,L_fit")?;
    for &(t, l) in rows {
        writeln!(w, "{},{}", fmt_real(t), fmt_real(l))?;
    }
    Ok(())
}
