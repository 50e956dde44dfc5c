//! Per-stage embedding tables and their line-oriented file format.
//!
//! Files are UTF-8. The first line is a header
//! `#stages S dims d1,...,dS costs C1,...,CS`, followed by one record per
//! sample: `label[,camera]|v1 ... vd1|...|v1 ... vdS`. Floats are written
//! with Rust's shortest round-trip formatting, so finite f64 values
//! survive a save/load cycle bit-exactly. Dataset files reuse the same
//! format with a single stage and cost 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{IdentityDataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Embeddings of one sample set at several stages of increasing cost.
///
/// All stage matrices share row count and row order. Tables produced by
/// the `embed` pipeline carry the fused embedding as the final block, so
/// consumers treat the last block as the most expensive exit.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    stages: Vec<Matrix>,
    costs: Vec<f64>,
    labels: Vec<u32>,
    cameras: Vec<Option<u32>>,
}

impl EmbeddingTable {
    pub fn new(
        stages: Vec<Matrix>,
        costs: Vec<f64>,
        labels: Vec<u32>,
        cameras: Vec<Option<u32>>,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("embedding table needs at least one stage"));
        }
        if costs.len() != stages.len() {
            return Err(Error::config(format!(
                "{} costs for {} stages",
                costs.len(),
                stages.len()
            )));
        }
        let rows = stages[0].rows();
        for (s, m) in stages.iter().enumerate() {
            if m.rows() != rows {
                return Err(Error::shape(format!(
                    "stage {} has {} rows, stage 1 has {}",
                    s + 1,
                    m.rows(),
                    rows
                )));
            }
            if m.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("stage {} has non-finite values", s + 1)));
            }
        }
        if labels.len() != rows || cameras.len() != rows {
            return Err(Error::shape(format!(
                "{} labels / {} cameras for {} rows",
                labels.len(),
                cameras.len(),
                rows
            )));
        }
        for w in costs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config(format!(
                    "costs must be strictly increasing across stages, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("costs must be finite"));
        }
        Ok(EmbeddingTable {
            stages,
            costs,
            labels,
            cameras,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn num_rows(&self) -> usize {
        self.stages[0].rows()
    }

    pub fn stage(&self, s: usize) -> &Matrix {
        &self.stages[s]
    }

    pub fn stages(&self) -> &[Matrix] {
        &self.stages
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn cameras(&self) -> &[Option<u32>] {
        &self.cameras
    }

    /// A table holding the given rows in the given order. Indices may
    /// repeat, which is how bootstrap-resampled query streams are built.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.num_rows() {
                return Err(Error::config(format!(
                    "row {} out of range for table with {} rows",
                    i,
                    self.num_rows()
                )));
            }
        }
        let stages = self
            .stages
            .iter()
            .map(|m| {
                let mut out = Matrix::zeros(indices.len(), m.cols());
                for (r, &i) in indices.iter().enumerate() {
                    out.row_mut(r).copy_from_slice(m.row(i));
                }
                out
            })
            .collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let cameras = indices.iter().map(|&i| self.cameras[i]).collect();
        EmbeddingTable::new(stages, self.costs.clone(), labels, cameras)
    }

    /// A table with the given stage blocks removed, costs and metadata kept.
    pub fn without_stage(&self, stage: usize) -> Result<Self> {
        if stage >= self.stages.len() {
            return Err(Error::config(format!(
                "stage {} out of range for table with {} stages",
                stage + 1,
                self.stages.len()
            )));
        }
        let stages = self
            .stages
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != stage)
            .map(|(_, m)| m.clone())
            .collect();
        let costs = self
            .costs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != stage)
            .map(|(_, c)| *c)
            .collect();
        EmbeddingTable::new(stages, costs, self.labels.clone(), self.cameras.clone())
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v}")
}

pub fn write_embedding_table(table: &EmbeddingTable, out: &mut impl Write) -> Result<()> {
    let dims: Vec<String> = table.stages.iter().map(|m| m.cols().to_string()).collect();
    let costs: Vec<String> = table.costs.iter().map(|c| fmt_float(*c)).collect();
    writeln!(
        out,
        "#stages {} dims {} costs {}",
        table.stages.len(),
        dims.join(","),
        costs.join(",")
    )?;
    for row in 0..table.num_rows() {
        let mut line = String::new();
        line.push_str(&table.labels[row].to_string());
        if let Some(cam) = table.cameras[row] {
            line.push(',');
            line.push_str(&cam.to_string());
        }
        for stage in &table.stages {
            line.push('|');
            let vals = stage.row(row);
            for (i, v) in vals.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&fmt_float(*v));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_embedding_table(input: &mut impl Read) -> Result<EmbeddingTable> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header line"))?;
    let header = header?;
    let (dims, costs) = parse_header(&header)?;

    let mut stages: Vec<Vec<f64>> = vec![Vec::new(); dims.len()];
    let mut labels = Vec::new();
    let mut cameras = Vec::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('|');
        let meta = fields.next().unwrap_or("");
        let mut meta_parts = meta.split(',');
        let label_str = meta_parts.next().unwrap_or("");
        let label: u32 = label_str.parse().map_err(|_| {
            Error::parse(line_no, format!("invalid label '{label_str}'"))
        })?;
        let camera = match meta_parts.next() {
            None => None,
            Some(cam) => Some(cam.parse::<u32>().map_err(|_| {
                Error::parse(line_no, format!("invalid camera id '{cam}'"))
            })?),
        };
        if meta_parts.next().is_some() {
            return Err(Error::parse(line_no, "too many fields before first '|'"));
        }

        let blocks: Vec<&str> = fields.collect();
        if blocks.len() != dims.len() {
            return Err(Error::parse(
                line_no,
                format!(
                    "record has {} stage block(s), expected {}",
                    blocks.len(),
                    dims.len()
                ),
            ));
        }
        for (s, block) in blocks.iter().enumerate() {
            let mut count = 0usize;
            for tok in block.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(
                        line_no,
                        format!("stage {} has invalid float '{}'", s + 1, tok),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        line_no,
                        format!("stage {} has non-finite value '{}'", s + 1, tok),
                    ));
                }
                stages[s].push(v);
                count += 1;
            }
            if count != dims[s] {
                return Err(Error::parse(
                    line_no,
                    format!(
                        "stage {} block has {} value(s), expected {}",
                        s + 1,
                        count,
                        dims[s]
                    ),
                ));
            }
        }
        labels.push(label);
        cameras.push(camera);
    }

    let rows = labels.len();
    let matrices: Vec<Matrix> = stages
        .into_iter()
        .zip(&dims)
        .map(|(data, &d)| Matrix::from_vec(rows, d, data))
        .collect();
    EmbeddingTable::new(matrices, costs, labels, cameras)
}

fn parse_header(header: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let bad = |msg: String| Error::parse(1, msg);
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 6 || tokens[0] != "#stages" || tokens[2] != "dims" || tokens[4] != "costs" {
        return Err(bad(format!(
            "malformed header '{header}', expected '#stages S dims d1,...,dS costs C1,...,CS'"
        )));
    }
    let stage_count: usize = tokens[1]
        .parse()
        .map_err(|_| bad(format!("invalid stage count '{}'", tokens[1])))?;
    if stage_count == 0 {
        return Err(bad("stage count must be >= 1".into()));
    }
    let dims: Vec<usize> = tokens[3]
        .split(',')
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| bad(format!("invalid dim '{t}'")))
        })
        .collect::<Result<_>>()?;
    let costs: Vec<f64> = tokens[5]
        .split(',')
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| bad(format!("invalid cost '{t}'")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != stage_count {
        return Err(bad(format!(
            "{} dims for {} stages",
            dims.len(),
            stage_count
        )));
    }
    if costs.len() != stage_count {
        return Err(bad(format!(
            "{} costs for {} stages",
            costs.len(),
            stage_count
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(bad("stage dims must be >= 1".into()));
    }
    for (i, w) in costs.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(bad(format!(
                "costs must be non-decreasing: stage {} cost {} < stage {} cost {}",
                i + 2,
                w[1],
                i + 1,
                w[0]
            )));
        }
        if w[1] == w[0] {
            return Err(bad(format!(
                "costs must be strictly increasing: stage {} and stage {} both cost {}",
                i + 1,
                i + 2,
                w[0]
            )));
        }
    }
    Ok((dims, costs))
}

pub fn save_embedding_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_embedding_table(table, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let mut file = File::open(path)?;
    read_embedding_table(&mut file)
}

/// Datasets are stored as single-stage tables with cost 0.
pub fn save_dataset(ds: &IdentityDataset, path: impl AsRef<Path>) -> Result<()> {
    let table = EmbeddingTable::new(
        vec![ds.features_matrix()],
        vec![0.0],
        ds.labels(),
        ds.cameras(),
    )?;
    save_embedding_table(&table, path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<IdentityDataset> {
    let table = load_embedding_table(path)?;
    if table.num_stages() != 1 {
        return Err(Error::config(format!(
            "dataset files must have exactly one stage block, found {}",
            table.num_stages()
        )));
    }
    let features = table.stage(0);
    let samples = (0..table.num_rows())
        .map(|i| Sample {
            features: features.row(i).to_vec(),
            label: table.labels()[i],
            camera: table.cameras()[i],
        })
        .collect();
    IdentityDataset::new(samples, features.cols())
}
