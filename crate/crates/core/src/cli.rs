//! Command-line front end.
//!
//! Exit codes: 0 success, 1 audit failure, 2 I/O or usage error, 3 syntax
//! error, 4 shape or evaluation error, 5 diagram validation failure.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value as Json;

use crate::causal::{intervene, Intervention};
use crate::codec::{self, decode_trace, decode_uniforms, decode_value, encode_uniforms, json_number, set_json, trace_record};
use crate::interpret::{evaluate, InterpretError};
use crate::kernel::{JointKernel, KernelError};
use crate::model::{parse_model, Model, ModelError};
use crate::rng::derive_seed;
use crate::space::{base_measure_mass, sigma_finite_cover, Space, Value};
use crate::weighted::{indicator, spw_check, Reference, SpwError, SpwReport};

#[derive(Debug, Parser)]
#[command(name = "jointkern", version, about = "Sample, score and intervene on string-diagram causal models")]
pub struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check the model file and report violations.
    Validate,
    /// Append trace records drawn from the model.
    Sample {
        #[arg(long)]
        n: u64,
        #[arg(long, env = "JOINTKERN_SEED", default_value_t = 0)]
        seed: u64,
        /// Append to this file instead of printing.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Model input as JSON.
        #[arg(long, value_name = "JSON")]
        input: Option<String>,
    },
    /// Print the joint log-density of each trace record.
    Logpdf {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_name = "JSON")]
        input: Option<String>,
    },
    /// Run a subcommand on the model with boxes forced to constants.
    Do {
        #[arg(long = "set", value_name = "BOX=VALUE", required = true)]
        set: Vec<String>,
        /// The subcommand to run, with its arguments.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true, value_name = "COMMAND")]
        then: Vec<OsString>,
    },
    /// Replay uniform assignments through the (intervened) model.
    Cf {
        #[arg(long, value_name = "FILE")]
        u: PathBuf,
        #[arg(long = "set", value_name = "BOX=VALUE")]
        set: Vec<String>,
        #[arg(long, value_name = "JSON")]
        input: Option<String>,
    },
    /// Recover uniform assignments that reproduce each trace.
    Abduct {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, value_name = "JSON")]
        input: Option<String>,
    },
    /// Audit weighted sampling against reference expectations.
    Spw {
        #[arg(long)]
        n: usize,
        #[arg(long, env = "JOINTKERN_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Print one piece of the countable finite-mass cover of a space.
    Cover {
        #[arg(long, value_name = "JSON")]
        space: String,
        #[arg(long)]
        index: u64,
    },
    /// Write the diagram in Graphviz DOT.
    ExportDot {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Syntax(String),
    #[error("{0}")]
    Eval(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Model(e) => e.exit_code(),
            CliError::Syntax(_) => 3,
            CliError::Eval(_) => 4,
            CliError::Validation(_) => 5,
        }
    }
}

impl From<InterpretError> for CliError {
    fn from(e: InterpretError) -> Self {
        match e {
            InterpretError::Invalid(_) => CliError::Validation(e.to_string()),
            InterpretError::UnknownBox(_) => CliError::Usage(e.to_string()),
            _ => CliError::Eval(e.to_string()),
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::Eval(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                2
            } else {
                let _ = write!(out, "{e}");
                0
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command line, writing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut model = cli.model.clone();
    let mut command = cli.command.clone();
    let mut sets = Vec::new();
    while let Command::Do { set, then } = command {
        sets.extend(set);
        let inner = Cli::try_parse_from(std::iter::once(OsString::from("jointkern do")).chain(then))
            .map_err(|e| CliError::Usage(e.to_string().trim_end().to_string()))?;
        model = inner.model.or(model);
        command = inner.command;
    }
    if let Command::Cover { space, index } = &command {
        return cover(space, *index, out);
    }
    let path = model.as_ref().ok_or_else(|| CliError::Usage("--model FILE is required".into()))?;
    let model = parse_model(path)?;
    let mut session = Session::new(model);
    session.set(&sets)?;
    session.run(&command, out)
}

fn cover(space: &str, index: u64, out: &mut dyn Write) -> Result<i32, CliError> {
    let j: Json = serde_json::from_str(space).map_err(|e| CliError::Syntax(format!("--space: {e}")))?;
    let space = Space::from_json(&j).map_err(|e| CliError::Syntax(format!("--space: {e}")))?;
    let piece = sigma_finite_cover(&space, index);
    let mass = base_measure_mass(&space, &piece).map_err(|e| CliError::Eval(e.to_string()))?;
    let line = format!(
        "{{\"index\":{index},\"space\":{},\"set\":{},\"mass\":{}}}",
        space.to_json(),
        set_json(&piece, &space),
        json_number(mass)
    );
    writeln!(out, "{line}").map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(0)
}

/// A loaded model together with the interventions applied to it.
#[derive(Debug, Clone)]
pub struct Session {
    model: Model,
    intervention: Intervention,
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Usage(format!("writing output: {e}")))
}

/// Non-empty lines of a JSONL file, parsed, with 1-based line numbers.
fn read_jsonl(path: &Path) -> Result<Vec<(usize, Json)>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|j| (i + 1, j))
                .map_err(|e| CliError::Syntax(format!("{}:{}:{}: {e}", path.display(), i + 1, e.column())))
        })
        .collect()
}

fn write_lines(lines: &[String], to: Option<&Path>, append: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let mut text = String::new();
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    match to {
        Some(path) => {
            let mut f = OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(path)
                .map_err(io_err(path))?;
            f.write_all(text.as_bytes()).map_err(io_err(path))
        }
        None => emit(out, &text),
    }
}

impl Session {
    pub fn new(model: Model) -> Self {
        Session { model, intervention: Intervention::new() }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn intervention(&self) -> &Intervention {
        &self.intervention
    }

    pub fn clear_interventions(&mut self) {
        self.intervention.clear();
    }

    /// Applies `BOX=JSON` assignments.
    pub fn set(&mut self, assignments: &[String]) -> Result<(), CliError> {
        for a in assignments {
            let (id, text) = a.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects BOX=VALUE, got '{a}'")))?;
            self.assign(id, text)?;
        }
        Ok(())
    }

    /// Forces box `id` to the JSON value `text`.
    pub fn assign(&mut self, id: &str, text: &str) -> Result<(), CliError> {
        let d = &self.model.diagram;
        let edge = d.graph.edge(id).ok_or_else(|| CliError::Usage(format!("unknown box '{id}'")))?;
        let j: Json = serde_json::from_str(text).map_err(|e| CliError::Syntax(format!("--set {id}: {e}")))?;
        let cod = self.model.interp.wires_space(d, &edge.cod)?;
        let v = decode_value(&cod, &j, &format!("--set {id}")).map_err(|e| CliError::Eval(e.to_string()))?;
        self.intervention.insert(id.to_string(), Some(v));
        Ok(())
    }

    /// The kernel of the model after the current interventions.
    pub fn kernel(&self) -> Result<JointKernel, CliError> {
        if self.intervention.is_empty() {
            return Ok(self.model.kernel.clone());
        }
        let surgered = intervene(&self.model.diagram, &self.model.interp, &self.intervention)?;
        Ok(evaluate(&self.model.diagram, &surgered)?)
    }

    /// Decodes an input for `k`, defaulting to the unit point.
    pub fn input(&self, k: &JointKernel, input: Option<&str>) -> Result<Value, CliError> {
        match input {
            Some(text) => {
                let j: Json = serde_json::from_str(text).map_err(|e| CliError::Syntax(format!("--input: {e}")))?;
                decode_value(k.dom(), &j, "--input").map_err(|e| CliError::Eval(e.to_string()))
            }
            None if *k.dom() == Space::Unit => Ok(Value::Unit),
            None => Err(CliError::Usage(format!("the model takes an input in {}; pass --input JSON", k.dom()))),
        }
    }

    fn run(&mut self, command: &Command, out: &mut dyn Write) -> Result<i32, CliError> {
        match command {
            Command::Validate => {
                self.kernel()?;
                let g = &self.model.diagram.graph;
                emit(out, &format!("OK: {} boxes, {} wires\n", g.boxes.len(), g.wires.len()))?;
            }
            Command::Sample { n, seed, out: to, input } => {
                let k = self.kernel()?;
                let z = self.input(&k, input.as_deref())?;
                let lines = (0..*n)
                    .into_par_iter()
                    .map(|i| -> Result<String, KernelError> {
                        let (t, x) = k.sample_with_trace(&z, derive_seed(*seed, i))?;
                        let lp = k.joint_log_density(&z, &t)?;
                        Ok(trace_record(&k, &t, &x, Some(lp)))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                write_lines(&lines, to.as_deref(), true, out)?;
            }
            Command::Logpdf { trace, input } => {
                let k = self.kernel()?;
                let z = self.input(&k, input.as_deref())?;
                let mut lines = Vec::new();
                for (line, j) in read_jsonl(trace)? {
                    let t = record_trace(&k, &j).map_err(|e| CliError::Eval(format!("{}:{line}: {e}", trace.display())))?;
                    let lp = k.joint_log_density(&z, &t).map_err(|e| CliError::Eval(format!("{}:{line}: {e}", trace.display())))?;
                    lines.push(json_number(lp));
                }
                write_lines(&lines, None, false, out)?;
            }
            Command::Do { .. } => unreachable!("interventions are collected before dispatch"),
            Command::Cf { u, set, input } => {
                self.set(set)?;
                let k = self.kernel()?;
                let z = self.input(&k, input.as_deref())?;
                let mut lines = Vec::new();
                for (line, j) in read_jsonl(u)? {
                    let at = |e: String| CliError::Eval(format!("{}:{line}: {e}", u.display()));
                    let mut assignment = decode_uniforms(&j).map_err(|e| at(e.to_string()))?;
                    assignment.retain(|id, _| !self.intervention.contains_key(id));
                    let (t, x) = k.replay(&z, &assignment).map_err(|e| at(e.to_string()))?;
                    lines.push(trace_record(&k, &t, &x, None));
                }
                write_lines(&lines, None, false, out)?;
            }
            Command::Abduct { trace, out: to, input } => {
                let k = self.kernel()?;
                let z = self.input(&k, input.as_deref())?;
                let mut lines = Vec::new();
                for (line, j) in read_jsonl(trace)? {
                    let at = |e: String| CliError::Eval(format!("{}:{line}: {e}", trace.display()));
                    let t = record_trace(&k, &j).map_err(|e| at(e.to_string()))?;
                    if k.joint_log_density(&z, &t).map_err(|e| at(e.to_string()))? == f64::NEG_INFINITY {
                        return Err(at("trace has zero density".into()));
                    }
                    lines.push(encode_uniforms(&k.abduct(&z, &t).map_err(|e| at(e.to_string()))?));
                }
                write_lines(&lines, to.as_deref(), false, out)?;
            }
            Command::Spw { n, seed } => return self.spw(*n, *seed, out),
            Command::Cover { .. } => unreachable!("handled before the model is loaded"),
            Command::ExportDot { out: to } => {
                let dot = self.model.diagram.to_dot();
                match to {
                    Some(path) => fs::write(path, dot).map_err(io_err(path))?,
                    None => emit(out, &dot)?,
                }
            }
        }
        Ok(0)
    }

    fn spw(&self, n: usize, seed: u64, out: &mut dyn Write) -> Result<i32, CliError> {
        let report = self.spw_report(n, seed)?;
        let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
        text.push('\n');
        emit(out, &text)?;
        Ok(if report.passed() { 0 } else { 1 })
    }

    /// Audits the weighted kernel with the model's tests, or with
    /// indicators against enumeration when it has none.
    pub fn spw_report(&self, n: usize, seed: u64) -> Result<SpwReport, CliError> {
        let m = &self.model;
        let weighted = intervene(&m.diagram, &m.weighted, &self.intervention)?;
        let wk = evaluate(&m.diagram, &weighted)?;
        let (tests, reference) = if m.spw_tests.is_empty() {
            let cod = crate::kernel::Composable::cod(&wk).clone();
            let points = cod
                .points()
                .filter(|_| cod.is_finite())
                .ok_or_else(|| CliError::Usage(format!("no spw tests in the model and output space {cod} is not finite")))?;
            let tests = points.iter().map(|p| indicator(&cod, p).expect("points of a finite space")).collect();
            (tests, Reference::Enumerate)
        } else {
            (m.spw_tests.iter().map(|t| t.h.clone()).collect::<Vec<_>>(), m.references())
        };
        spw_check(&wk, &tests, &reference, n, seed).map_err(|e| match e {
            SpwError::TooFewSamples { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Eval(e.to_string()),
        })
    }
}

/// The trace of a sample record, or the object itself when it has no
/// `trace` field.
fn record_trace(k: &JointKernel, j: &Json) -> Result<crate::kernel::Trace, codec::DecodeError> {
    decode_trace(k, j.get("trace").unwrap_or(j))
}
