//! ESRI ASCII grid bathymetry, nearest-cell depth lookup.
//!
//! Depths are meters, positive below sea level. Cells carrying the NODATA
//! value are returned as-is; downstream zone assignment treats any
//! non-positive depth as land/coast.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BathyGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major from the northernmost row, as stored in the file.
    data: Vec<f64>,
}

impl BathyGrid {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: f64,
        data: Vec<f64>,
    ) -> Result<BathyGrid> {
        if ncols == 0 || nrows == 0 || cellsize <= 0.0 {
            return Err(Error::validation("bathy grid needs positive dimensions"));
        }
        if data.len() != ncols * nrows {
            return Err(Error::dimension(format!(
                "bathy grid has {} values, expected {}",
                data.len(),
                ncols * nrows
            )));
        }
        Ok(BathyGrid { ncols, nrows, xllcorner, yllcorner, cellsize, nodata, data })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<BathyGrid> {
        let reader = BufReader::new(reader);
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut cellsize = None;
        let mut nodata = -9999.0;
        let mut data = Vec::new();

        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let first = parts.next().unwrap();
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let value: f64 = parts
                    .next()
                    .ok_or_else(|| Error::parse(format!("bathy header '{first}' has no value")))?
                    .parse()
                    .map_err(|_| Error::parse(format!("bathy header '{first}' is not numeric")))?;
                match first.to_ascii_lowercase().as_str() {
                    "ncols" => ncols = Some(value as usize),
                    "nrows" => nrows = Some(value as usize),
                    "xllcorner" => xll = Some(value),
                    "yllcorner" => yll = Some(value),
                    "cellsize" => cellsize = Some(value),
                    "nodata_value" => nodata = value,
                    other => {
                        return Err(Error::parse(format!("unknown bathy header '{other}'")))
                    }
                }
            } else {
                for tok in trimmed.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| {
                        Error::parse(format!("bathy grid value '{tok}' is not numeric"))
                    })?);
                }
            }
        }

        let ncols = ncols.ok_or_else(|| Error::parse("bathy grid missing ncols"))?;
        let nrows = nrows.ok_or_else(|| Error::parse("bathy grid missing nrows"))?;
        let xll = xll.ok_or_else(|| Error::parse("bathy grid missing xllcorner"))?;
        let yll = yll.ok_or_else(|| Error::parse("bathy grid missing yllcorner"))?;
        let cellsize = cellsize.ok_or_else(|| Error::parse("bathy grid missing cellsize"))?;
        BathyGrid::new(ncols, nrows, xll, yll, cellsize, nodata, data)
    }

    pub fn from_file(path: &Path) -> Result<BathyGrid> {
        let file = File::open(path).map_err(|e| {
            Error::MissingArtifact(format!("bathy grid '{}': {e}", path.display()))
        })?;
        BathyGrid::from_reader(file)
    }

    pub fn x_max(&self) -> f64 {
        self.xllcorner + self.ncols as f64 * self.cellsize
    }

    pub fn y_max(&self) -> f64 {
        self.yllcorner + self.nrows as f64 * self.cellsize
    }

    /// Depth of the cell containing (lon, lat); `None` outside the bounding
    /// box. Points on the upper edges map to the last row/column.
    pub fn depth_at(&self, lat: f64, lon: f64) -> Option<f64> {
        if lon < self.xllcorner || lon > self.x_max() || lat < self.yllcorner || lat > self.y_max()
        {
            return None;
        }
        let col =
            (((lon - self.xllcorner) / self.cellsize) as usize).min(self.ncols - 1);
        let row_from_south =
            (((lat - self.yllcorner) / self.cellsize) as usize).min(self.nrows - 1);
        let row = self.nrows - 1 - row_from_south;
        Some(self.data[row * self.ncols + col])
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "xllcorner {}", self.xllcorner)?;
        writeln!(w, "yllcorner {}", self.yllcorner)?;
        writeln!(w, "cellsize {}", self.cellsize)?;
        writeln!(w, "NODATA_value {}", self.nodata)?;
        for row in self.data.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = "ncols 3\nnrows 2\nxllcorner 0.0\nyllcorner 0.0\ncellsize 1.0\nNODATA_value -9999\n10 20 30\n40 50 60\n";

    #[test]
    fn parses_and_indexes_from_north() {
        let g = BathyGrid::from_reader(GRID.as_bytes()).unwrap();
        assert_eq!(g.ncols, 3);
        assert_eq!(g.nrows, 2);
        // southern row is the last data line
        assert_eq!(g.depth_at(0.5, 0.5), Some(40.0));
        assert_eq!(g.depth_at(1.5, 2.5), Some(30.0));
    }

    #[test]
    fn outside_bbox_is_none() {
        let g = BathyGrid::from_reader(GRID.as_bytes()).unwrap();
        assert_eq!(g.depth_at(-0.1, 0.5), None);
        assert_eq!(g.depth_at(0.5, 3.1), None);
    }

    #[test]
    fn upper_edges_clamp_into_grid() {
        let g = BathyGrid::from_reader(GRID.as_bytes()).unwrap();
        assert_eq!(g.depth_at(2.0, 3.0), Some(30.0));
    }

    #[test]
    fn wrong_cell_count_is_an_error() {
        let bad = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(BathyGrid::from_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn round_trips_through_writer() {
        let g = BathyGrid::from_reader(GRID.as_bytes()).unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let g2 = BathyGrid::from_reader(&buf[..]).unwrap();
        assert_eq!(g2.depth_at(0.5, 0.5), Some(40.0));
        assert_eq!(g2.nodata, -9999.0);
    }
}
