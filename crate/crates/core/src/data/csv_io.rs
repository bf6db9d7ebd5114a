//! CSV ingestion.
//!
//! All files are UTF-8, comma-delimited, `.` decimal separator, with a header
//! row. Column names `region`, `sector`, `period`, `share`, `shifter`, `y`,
//! `y2`, `weight`, and `cluster` are reserved; in the regions file every other
//! column is treated as a control.
//!
//! Shares come in long format (`region,sector,share`); missing
//! (region, sector) pairs are zero. Region and sector ordering is the order of
//! first appearance in the file. Panel files add a `period` column.

use super::panel::PanelShare;
use super::{Design, SharesMatrix, Shifters};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::path::Path;

struct Header {
    index: HashMap<String, usize>,
    controls: Vec<(String, usize)>,
}

const RESERVED: &[&str] = &[
    "region", "sector", "period", "share", "shifter", "y", "y2", "weight", "cluster",
];

fn read_header(rdr: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Header> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let mut index = HashMap::new();
    let mut controls = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        let name = name.trim();
        if RESERVED.contains(&name) {
            if index.insert(name.to_string(), i).is_some() {
                return Err(Error::Data(format!(
                    "{}: duplicate column {name}",
                    path.display()
                )));
            }
        } else {
            controls.push((name.to_string(), i));
        }
    }
    Ok(Header { index, controls })
}

impl Header {
    fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("{}: missing column {name}", path.display())))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn parse_f64(field: &str, path: &Path, line: u64) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::Data(format!(
            "{} line {line}: cannot parse number from {field:?}",
            path.display()
        ))
    })
}

/// Reads a long-format shares file (`region,sector,share`).
///
/// The result has been checked only structurally; run
/// [`super::validate_dataset`] to surface value-constraint violations.
pub fn read_shares_csv(path: &Path) -> Result<SharesMatrix> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_region = header.require("region", path)?;
    let c_sector = header.require("sector", path)?;
    let c_share = header.require("share", path)?;

    let mut regions: Vec<String> = Vec::new();
    let mut sectors: Vec<String> = Vec::new();
    let mut region_idx: HashMap<String, usize> = HashMap::new();
    let mut sector_idx: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let r = record.get(c_region).unwrap_or("").to_string();
        let s = record.get(c_sector).unwrap_or("").to_string();
        let v = parse_f64(record.get(c_share).unwrap_or(""), path, line)?;
        let ri = *region_idx.entry(r.clone()).or_insert_with(|| {
            regions.push(r);
            regions.len() - 1
        });
        let si = *sector_idx.entry(s.clone()).or_insert_with(|| {
            sectors.push(s);
            sectors.len() - 1
        });
        if seen.insert((ri, si), ()).is_some() {
            return Err(Error::Data(format!(
                "{} line {line}: duplicate share entry ({},{})",
                path.display(),
                regions[ri],
                sectors[si]
            )));
        }
        entries.push((ri, si, v));
    }
    if regions.is_empty() {
        return Err(Error::Data(format!("{}: no share entries", path.display())));
    }

    let mut w = DMatrix::zeros(regions.len(), sectors.len());
    for (i, j, v) in entries {
        w[(i, j)] = v;
    }
    SharesMatrix::from_raw_parts(regions, sectors, w)
}

/// Parsed shifters file prior to alignment with a share matrix.
#[derive(Debug, Clone)]
pub struct ShifterTable {
    pub sectors: Vec<String>,
    pub values: Vec<f64>,
    pub cluster: Option<Vec<String>>,
}

impl ShifterTable {
    /// Reorders the table to a share matrix's sector order. Every sector must
    /// appear exactly once.
    pub fn align(&self, shares: &SharesMatrix) -> Result<(Shifters, Option<Vec<String>>)> {
        let mut by_name: HashMap<&str, usize> = HashMap::with_capacity(self.sectors.len());
        for (i, s) in self.sectors.iter().enumerate() {
            if by_name.insert(s.as_str(), i).is_some() {
                return Err(Error::Data(format!("duplicate shifter for sector {s}")));
            }
        }
        if self.sectors.len() != shares.n_sectors() {
            return Err(Error::Dimension(format!(
                "shifters file has {} sectors, share matrix has {}",
                self.sectors.len(),
                shares.n_sectors()
            )));
        }
        let mut values = Vec::with_capacity(shares.n_sectors());
        let mut clusters = self.cluster.as_ref().map(|_| Vec::with_capacity(shares.n_sectors()));
        for s in shares.sectors() {
            let i = *by_name
                .get(s.as_str())
                .ok_or_else(|| Error::Data(format!("no shifter for sector {s}")))?;
            values.push(self.values[i]);
            if let (Some(out), Some(src)) = (clusters.as_mut(), self.cluster.as_ref()) {
                out.push(src[i].clone());
            }
        }
        Ok((Shifters::new(values)?, clusters))
    }
}

/// Reads a shifters file (`sector,shifter[,cluster]`).
pub fn read_shifters_csv(path: &Path) -> Result<ShifterTable> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_sector = header.require("sector", path)?;
    let c_shifter = header.require("shifter", path)?;
    let c_cluster = header.optional("cluster");

    let mut table = ShifterTable {
        sectors: Vec::new(),
        values: Vec::new(),
        cluster: c_cluster.map(|_| Vec::new()),
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        table.sectors.push(record.get(c_sector).unwrap_or("").to_string());
        table
            .values
            .push(parse_f64(record.get(c_shifter).unwrap_or(""), path, line)?);
        if let (Some(c), Some(ci)) = (table.cluster.as_mut(), c_cluster) {
            c.push(record.get(ci).unwrap_or("").to_string());
        }
    }
    Ok(table)
}

/// Reads a panel shifters file (`sector,period,shifter[,cluster]`), keying by
/// the expanded `"{sector}:{period}"` labels produced by
/// [`super::panel_expand`].
pub fn read_panel_shifters_csv(path: &Path) -> Result<(Vec<(String, String)>, ShifterTable)> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_sector = header.require("sector", path)?;
    let c_period = header.require("period", path)?;
    let c_shifter = header.require("shifter", path)?;
    let c_cluster = header.optional("cluster");

    let mut rows = Vec::new();
    let mut table = ShifterTable {
        sectors: Vec::new(),
        values: Vec::new(),
        cluster: c_cluster.map(|_| Vec::new()),
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let k = record.get(c_sector).unwrap_or("").to_string();
        let t = record.get(c_period).unwrap_or("").to_string();
        table.sectors.push(format!("{k}:{t}"));
        rows.push((k, t));
        table
            .values
            .push(parse_f64(record.get(c_shifter).unwrap_or(""), path, line)?);
        if let (Some(c), Some(ci)) = (table.cluster.as_mut(), c_cluster) {
            c.push(record.get(ci).unwrap_or("").to_string());
        }
    }
    Ok((rows, table))
}

/// Reads a panel shares file (`region,sector,period,share`).
pub fn read_panel_shares_csv(path: &Path) -> Result<Vec<PanelShare>> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_region = header.require("region", path)?;
    let c_sector = header.require("sector", path)?;
    let c_period = header.require("period", path)?;
    let c_share = header.require("share", path)?;

    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        entries.push(PanelShare {
            region: record.get(c_region).unwrap_or("").to_string(),
            sector: record.get(c_sector).unwrap_or("").to_string(),
            period: record.get(c_period).unwrap_or("").to_string(),
            value: parse_f64(record.get(c_share).unwrap_or(""), path, line)?,
        });
    }
    Ok(entries)
}

/// Parsed regions file prior to alignment.
#[derive(Debug, Clone)]
pub struct RegionTable {
    /// Row keys: the region id, or `"{region}:{period}"` for panel files.
    pub keys: Vec<String>,
    pub y: Vec<f64>,
    pub y2: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub cluster: Option<Vec<String>>,
    pub control_names: Vec<String>,
    /// Column-major control values.
    pub controls: Vec<Vec<f64>>,
}

impl RegionTable {
    /// Builds a [`Design`] with rows reordered to `order` (a share matrix's
    /// region labels). `use_weights`/`use_cluster` opt in to the respective
    /// columns; requesting an absent column is an error.
    pub fn to_design(&self, order: &[String], use_weights: bool, use_cluster: bool) -> Result<Design> {
        let mut by_key: HashMap<&str, usize> = HashMap::with_capacity(self.keys.len());
        for (i, k) in self.keys.iter().enumerate() {
            if by_key.insert(k.as_str(), i).is_some() {
                return Err(Error::Data(format!("duplicate region row {k}")));
            }
        }
        if self.keys.len() != order.len() {
            return Err(Error::Dimension(format!(
                "regions file has {} rows, share matrix has {} regions",
                self.keys.len(),
                order.len()
            )));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|k| {
                by_key
                    .get(k.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("no outcome row for region {k}")))
            })
            .collect::<Result<_>>()?;

        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let mut design = Design::new(pick(&self.y));
        if let Some(y2) = &self.y2 {
            design = design.with_treatment(pick(y2));
        }
        if use_weights {
            let w = self
                .weight
                .as_ref()
                .ok_or_else(|| Error::Data("weights requested but no weight column".into()))?;
            design = design.with_weights(pick(w));
        }
        if use_cluster {
            let c = self
                .cluster
                .as_ref()
                .ok_or_else(|| Error::Data("clusters requested but no cluster column".into()))?;
            design = design.with_region_clusters(perm.iter().map(|&i| c[i].clone()).collect());
        }
        if !self.controls.is_empty() {
            let n = order.len();
            let mut z = DMatrix::zeros(n, self.controls.len());
            for (j, col) in self.controls.iter().enumerate() {
                for (row, &i) in perm.iter().enumerate() {
                    z[(row, j)] = col[i];
                }
            }
            design = design.with_controls(z);
        }
        Ok(design)
    }
}

fn read_region_table(path: &Path, panel: bool) -> Result<RegionTable> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_region = header.require("region", path)?;
    let c_period = if panel { Some(header.require("period", path)?) } else { None };
    let c_y = header.require("y", path)?;
    let c_y2 = header.optional("y2");
    let c_weight = header.optional("weight");
    let c_cluster = header.optional("cluster");

    let mut table = RegionTable {
        keys: Vec::new(),
        y: Vec::new(),
        y2: c_y2.map(|_| Vec::new()),
        weight: c_weight.map(|_| Vec::new()),
        cluster: c_cluster.map(|_| Vec::new()),
        control_names: header.controls.iter().map(|(n, _)| n.clone()).collect(),
        controls: vec![Vec::new(); header.controls.len()],
    };

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let region = record.get(c_region).unwrap_or("").to_string();
        let key = match c_period {
            Some(cp) => format!("{region}:{}", record.get(cp).unwrap_or("")),
            None => region,
        };
        table.keys.push(key);
        table.y.push(parse_f64(record.get(c_y).unwrap_or(""), path, line)?);
        if let (Some(v), Some(c)) = (table.y2.as_mut(), c_y2) {
            v.push(parse_f64(record.get(c).unwrap_or(""), path, line)?);
        }
        if let (Some(v), Some(c)) = (table.weight.as_mut(), c_weight) {
            v.push(parse_f64(record.get(c).unwrap_or(""), path, line)?);
        }
        if let (Some(v), Some(c)) = (table.cluster.as_mut(), c_cluster) {
            v.push(record.get(c).unwrap_or("").to_string());
        }
        for (j, (_, ci)) in header.controls.iter().enumerate() {
            table.controls[j].push(parse_f64(record.get(*ci).unwrap_or(""), path, line)?);
        }
    }
    Ok(table)
}

/// Reads a regions file (`region,y[,y2][,weight][,cluster],z1,...,zK`).
pub fn read_regions_csv(path: &Path) -> Result<RegionTable> {
    read_region_table(path, false)
}

/// Reads a panel regions file, which additionally carries a `period` column;
/// row keys become `"{region}:{period}"`.
pub fn read_panel_regions_csv(path: &Path) -> Result<RegionTable> {
    read_region_table(path, true)
}

/// Reads a long-format region×sector matrix (`region,sector,value` columns,
/// where `value` is named by `value_column`), aligned to a share matrix.
/// Missing pairs are zero. Used for leave-one-out inputs such as local shocks
/// and aggregation weights.
pub fn read_matrix_csv(path: &Path, value_column: &str, shares: &SharesMatrix) -> Result<DMatrix<f64>> {
    let mut rdr = open(path)?;
    let header = read_header(&mut rdr, path)?;
    let c_region = header.require("region", path)?;
    let c_sector = header.require("sector", path)?;
    let c_value = header
        .index
        .get(value_column)
        .copied()
        .or_else(|| {
            header
                .controls
                .iter()
                .find(|(n, _)| n == value_column)
                .map(|(_, i)| *i)
        })
        .ok_or_else(|| Error::Data(format!("{}: missing column {value_column}", path.display())))?;

    let region_idx: HashMap<&str, usize> =
        shares.regions().iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let sector_idx: HashMap<&str, usize> =
        shares.sectors().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut m = DMatrix::zeros(shares.n_regions(), shares.n_sectors());
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let r = record.get(c_region).unwrap_or("");
        let s = record.get(c_sector).unwrap_or("");
        let i = *region_idx
            .get(r)
            .ok_or_else(|| Error::Data(format!("{} line {line}: unknown region {r}", path.display())))?;
        let j = *sector_idx
            .get(s)
            .ok_or_else(|| Error::Data(format!("{} line {line}: unknown sector {s}", path.display())))?;
        m[(i, j)] = parse_f64(record.get(c_value).unwrap_or(""), path, line)?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn shares_round_trip_with_first_appearance_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "shares.csv",
            "region,sector,share\nb,manu,0.4\na,manu,0.3\na,agri,0.2\n",
        );
        let shares = read_shares_csv(&path).unwrap();
        assert_eq!(shares.regions(), ["b".to_string(), "a".to_string()]);
        assert_eq!(shares.sectors(), ["manu".to_string(), "agri".to_string()]);
        assert_eq!(shares.weights()[(0, 0)], 0.4);
        assert_eq!(shares.weights()[(1, 1)], 0.2);
        // missing (b, agri) defaults to zero
        assert_eq!(shares.weights()[(0, 1)], 0.0);
    }

    #[test]
    fn duplicate_share_rows_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "shares.csv",
            "region,sector,share\na,m,0.4\na,m,0.5\n",
        );
        assert!(matches!(read_shares_csv(&path), Err(Error::Data(_))));
    }

    #[test]
    fn shifters_align_to_share_order() {
        let dir = tempfile::tempdir().unwrap();
        let shares = read_shares_csv(&write_file(
            &dir,
            "shares.csv",
            "region,sector,share\na,m,0.5\na,g,0.5\n",
        ))
        .unwrap();
        let table = read_shifters_csv(&write_file(
            &dir,
            "shifters.csv",
            "sector,shifter,cluster\ng,2.0,c1\nm,1.0,c2\n",
        ))
        .unwrap();
        let (shifters, clusters) = table.align(&shares).unwrap();
        assert_eq!(shifters.values()[0], 1.0);
        assert_eq!(shifters.values()[1], 2.0);
        assert_eq!(clusters.unwrap(), vec!["c2".to_string(), "c1".to_string()]);
    }

    #[test]
    fn missing_shifter_for_sector_errors() {
        let dir = tempfile::tempdir().unwrap();
        let shares = read_shares_csv(&write_file(
            &dir,
            "shares.csv",
            "region,sector,share\na,m,0.5\na,g,0.5\n",
        ))
        .unwrap();
        let table = read_shifters_csv(&write_file(&dir, "shifters.csv", "sector,shifter\nm,1.0\n"))
            .unwrap();
        assert!(table.align(&shares).is_err());
    }

    #[test]
    fn regions_file_parses_optional_columns_and_controls() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "regions.csv",
            "region,y,y2,weight,cluster,pop,density\nb,1.0,0.5,2.0,east,10,1.5\na,2.0,0.7,1.0,west,20,2.5\n",
        );
        let table = read_regions_csv(&path).unwrap();
        assert_eq!(table.control_names, vec!["pop".to_string(), "density".to_string()]);
        let order = vec!["a".to_string(), "b".to_string()];
        let design = table.to_design(&order, true, true).unwrap();
        assert_eq!(design.y1()[0], 2.0);
        assert_eq!(design.y2().unwrap()[1], 0.5);
        assert_eq!(design.obs_weight().unwrap()[0], 1.0);
        assert_eq!(design.region_cluster().unwrap()[1], "east");
        assert_eq!(design.controls()[(0, 0)], 20.0);
        assert_eq!(design.controls()[(1, 1)], 1.5);
    }

    #[test]
    fn bad_number_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(&dir, "shares.csv", "region,sector,share\na,m,xyz\n");
        let err = read_shares_csv(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
