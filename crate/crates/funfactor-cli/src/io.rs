//! On-disk formats: long-format observation CSV and JSON artifacts.
//!
//! Observations travel as one row per (subject, time, variable) with floats
//! rendered at 17 significant digits, so a write/read cycle reproduces the
//! in-memory dataset bit for bit regardless of how many variables there are.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use funfactor::data::{validate_dataset, LongitudinalDataset, SubjectRecord};

use crate::error::CliError;

/// Header of the observation CSV.
pub const LONG_HEADER: [&str; 4] = ["subject_id", "time", "variable", "value"];

/// Renders a float with 17 significant digits — enough that parsing the
/// text recovers the identical bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// The dataset's variable names, synthesizing zero-padded `V…` labels when
/// none are attached.
pub fn variable_names(data: &LongitudinalDataset) -> Vec<String> {
    match &data.variable_names {
        Some(names) => names.clone(),
        None => {
            let width = data.p.to_string().len();
            (1..=data.p).map(|j| format!("V{j:0width$}")).collect()
        }
    }
}

/// Writes the dataset in long format: one row per (subject, time, variable),
/// subjects in order, each observation's variables grouped together.
pub fn write_long_csv(path: &Path, data: &LongitudinalDataset) -> Result<(), CliError> {
    let names = variable_names(data);
    let file = File::create(path).map_err(|e| CliError::at(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(LONG_HEADER)
        .map_err(|e| CliError::at(path, e))?;
    for subject in &data.subjects {
        for (row, &t) in subject.times.iter().enumerate() {
            let time = fmt_f64(t);
            for (j, name) in names.iter().enumerate() {
                writer
                    .write_record([
                        subject.subject_id.as_str(),
                        &time,
                        name,
                        &fmt_f64(subject.values[(row, j)]),
                    ])
                    .map_err(|e| CliError::at(path, e))?;
            }
        }
    }
    writer.flush().map_err(|e| CliError::at(path, e))
}

/// One observation round being accumulated: the shared time plus the
/// variables seen so far.
struct Block {
    line: u64,
    time: f64,
    entries: Vec<(String, f64)>,
    seen: HashSet<String>,
}

impl Block {
    fn new(line: u64, time: f64) -> Self {
        Block {
            line,
            time,
            entries: Vec::new(),
            seen: HashSet::new(),
        }
    }
}

/// Variable order frozen by the first completed observation block.
struct VariableSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

struct SubjectBuilder {
    id: String,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
    current: Option<Block>,
}

/// Reads a long-format CSV back into a validated dataset.
///
/// Rows for one subject must be contiguous; within a subject, consecutive
/// rows form one observation block until a variable name repeats, at which
/// point a new block (new observation time) begins. The first completed
/// block fixes the variable set; every block must then contain exactly
/// those variables (any order) and agree on its time bit for bit. Repeated
/// time values across different blocks are legitimate — ties are broken by
/// the repetition structure, not the clock.
pub fn read_long_csv(path: &Path) -> Result<LongitudinalDataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::at(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let fail = |line: u64, msg: String| CliError::Data(format!("{}:{line}: {msg}", path.display()));

    let header = reader.headers().map_err(|e| CliError::at(path, e))?;
    if header != LONG_HEADER[..] {
        return Err(fail(
            1,
            format!(
                "expected header `{}`, found `{}`",
                LONG_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut variables: Option<VariableSet> = None;
    let mut subjects: Vec<SubjectRecord> = Vec::new();
    let mut completed: HashSet<String> = HashSet::new();
    let mut builder: Option<SubjectBuilder> = None;

    for record in reader.records() {
        let record = record.map_err(|e| CliError::at(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let subject_id = &record[0];
        let time: f64 = record[1]
            .parse()
            .map_err(|e| fail(line, format!("bad time `{}`: {e}", &record[1])))?;
        let variable = &record[2];
        let value: f64 = record[3]
            .parse()
            .map_err(|e| fail(line, format!("bad value `{}`: {e}", &record[3])))?;

        // Subject boundary: finish the previous subject and open a new one.
        if builder.as_ref().map(|b| b.id.as_str()) != Some(subject_id) {
            if let Some(done) = builder.take() {
                subjects.push(finish_subject(done, &mut variables, path)?);
            }
            if !completed.insert(subject_id.to_string()) {
                return Err(fail(
                    line,
                    format!("rows for subject `{subject_id}` are not contiguous"),
                ));
            }
            builder = Some(SubjectBuilder {
                id: subject_id.to_string(),
                times: Vec::new(),
                rows: Vec::new(),
                current: None,
            });
        }
        let subject = builder.as_mut().expect("subject open");

        if let Some(vars) = &variables {
            if !vars.index.contains_key(variable) {
                return Err(fail(
                    line,
                    format!(
                        "unknown variable `{variable}`; the first observation block fixed {} variables",
                        vars.names.len()
                    ),
                ));
            }
        }

        // A repeated variable ends the block: the row starts a new
        // observation round.
        if subject
            .current
            .as_ref()
            .is_some_and(|b| b.seen.contains(variable))
        {
            let block = subject.current.take().expect("block open");
            close_block(subject, block, &mut variables, path)?;
        }
        let block = subject.current.get_or_insert_with(|| Block::new(line, time));
        if time.to_bits() != block.time.to_bits() {
            return Err(fail(
                line,
                format!(
                    "time {} disagrees with {} from line {}; an observation block must share one time",
                    &record[1],
                    fmt_f64(block.time),
                    block.line
                ),
            ));
        }
        block.seen.insert(variable.to_string());
        block.entries.push((variable.to_string(), value));
    }

    if let Some(done) = builder.take() {
        subjects.push(finish_subject(done, &mut variables, path)?);
    }
    let variables = variables
        .ok_or_else(|| CliError::Data(format!("{}: no observation rows", path.display())))?;

    let p = variables.names.len();
    let dataset = LongitudinalDataset::new(subjects, p, Some(variables.names));
    validate_dataset(dataset).map_err(CliError::from)
}

fn finish_subject(
    mut subject: SubjectBuilder,
    variables: &mut Option<VariableSet>,
    path: &Path,
) -> Result<SubjectRecord, CliError> {
    if let Some(block) = subject.current.take() {
        close_block(&mut subject, block, variables, path)?;
    }
    let (n, p) = (subject.times.len(), subject.rows.first().map_or(0, Vec::len));
    Ok(SubjectRecord {
        subject_id: subject.id,
        times: subject.times,
        values: DMatrix::from_fn(n, p, |r, c| subject.rows[r][c]),
    })
}

/// Checks a finished block against the frozen variable set (freezing it if
/// this is the first block of the file) and appends the observation row.
fn close_block(
    subject: &mut SubjectBuilder,
    block: Block,
    variables: &mut Option<VariableSet>,
    path: &Path,
) -> Result<(), CliError> {
    let vars = variables.get_or_insert_with(|| {
        let names: Vec<String> = block.entries.iter().map(|(n, _)| n.clone()).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.clone(), j))
            .collect();
        VariableSet { names, index }
    });
    if block.entries.len() != vars.names.len() {
        return Err(CliError::Data(format!(
            "{}:{}: observation block for subject `{}` has {} of {} variables",
            path.display(),
            block.line,
            subject.id,
            block.entries.len(),
            vars.names.len()
        )));
    }
    let mut row = vec![0.0; vars.names.len()];
    for (name, value) in &block.entries {
        row[vars.index[name]] = *value;
    }
    subject.times.push(block.time);
    subject.rows.push(row);
    Ok(())
}

/// CSV writer over a buffered file.
pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::at(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// Writes a pretty-printed JSON document ending in a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::at(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| CliError::at(path, e))?;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(|e| CliError::at(path, e))
}

/// Reads a JSON document; failures are data errors carrying the path.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| CliError::at(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::at(path, e))
}

/// Writes a text file (reports, tables).
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::at(path, e))
}
