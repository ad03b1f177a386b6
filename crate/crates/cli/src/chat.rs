//! Line-oriented chat REPL.
//!
//! Each non-empty line is one text turn. `/image <path>` attaches an image
//! to the next turn; an empty line sends a pending image on its own and is
//! otherwise ignored. `/quit` or end of input stops, sending any pending
//! image first.

use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use eartriage_core::locale::Language;
use eartriage_core::router::ImagePayload;
use eartriage_core::{Agent, AgentTurn, Prompt};
use eartriage_service::{build_agent, ServiceConfig};

use crate::{input, Failure};

#[derive(Args)]
pub struct ChatArgs {
    /// Use the offline mock backends and the packaged corpus.
    #[arg(long, conflicts_with = "config")]
    pub mock: bool,
    /// Service config describing the backends to use.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Image attached to the first turn.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Reply language; guessed from the text otherwise.
    #[arg(long)]
    pub lang: Option<Language>,
    /// Print only the replies, without route and source lines.
    #[arg(long, short)]
    pub quiet: bool,
    #[arg(long, default_value = "cli")]
    pub session: String,
}

pub(crate) async fn run(args: &ChatArgs) -> Result<(), Failure> {
    let agent = match (&args.config, args.mock) {
        (_, true) => Agent::mock().await.context("building mock agent")?,
        (Some(p), false) => {
            let cfg = ServiceConfig::load(p).map_err(input)?;
            build_agent(&cfg).await.context("building agent")?
        }
        (None, false) => return Err(input(anyhow!("chat needs --config <file> or --mock"))),
    };
    let pending = match &args.image {
        Some(p) => Some(read_image(p).map_err(input)?),
        None => None,
    };
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let opts = ReplOptions {
        session: args.session.clone(),
        lang: args.lang,
        quiet: args.quiet,
        prompt: interactive,
    };
    repl(&agent, &opts, pending, stdin.lock(), &mut out, &mut err)
        .await
        .context("chat i/o")?;
    Ok(())
}

pub struct ReplOptions {
    pub session: String,
    pub lang: Option<Language>,
    pub quiet: bool,
    /// Print a `> ` prompt before each read.
    pub prompt: bool,
}

fn read_image(path: &Path) -> anyhow::Result<ImagePayload> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ImagePayload {
        bytes,
        media_type: String::new(),
    })
}

/// Runs the loop until `input` ends; returns the number of turns answered.
pub async fn repl(
    agent: &Agent,
    opts: &ReplOptions,
    mut pending: Option<ImagePayload>,
    mut input: impl BufRead,
    out: &mut impl Write,
    err: &mut impl Write,
) -> std::io::Result<usize> {
    let mut answered = 0;
    let mut line = String::new();
    loop {
        if opts.prompt {
            write!(out, "> ")?;
            out.flush()?;
        }
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim();
        if text == "/quit" || text == "/exit" {
            break;
        }
        if let Some(path) = text.strip_prefix("/image") {
            match read_image(Path::new(path.trim())) {
                Ok(img) if !path.trim().is_empty() => {
                    pending = Some(img);
                    writeln!(err, "image attached to the next turn")?;
                }
                Ok(_) => writeln!(err, "usage: /image <path>")?,
                Err(e) => writeln!(err, "error: {e:#}")?,
            }
            continue;
        }
        if text.is_empty() && pending.is_none() {
            continue;
        }
        let text = (!text.is_empty()).then(|| text.to_string());
        if turn(agent, opts, text, pending.take(), out, err).await? {
            answered += 1;
        }
    }
    if pending.is_some() && turn(agent, opts, None, pending.take(), out, err).await? {
        answered += 1;
    }
    Ok(answered)
}

async fn turn(
    agent: &Agent,
    opts: &ReplOptions,
    text: Option<String>,
    image: Option<ImagePayload>,
    out: &mut impl Write,
    err: &mut impl Write,
) -> std::io::Result<bool> {
    let prompt = match Prompt::new(opts.session.clone(), text, image) {
        Ok(p) => p,
        Err(e) => {
            writeln!(err, "error: {e}")?;
            return Ok(false);
        }
    };
    match agent.handle(&prompt, opts.lang).await {
        Ok(t) => {
            out.write_all(render_turn(&t, opts.quiet).as_bytes())?;
            out.flush()?;
            Ok(true)
        }
        Err(e) => {
            writeln!(err, "error: {e}")?;
            Ok(false)
        }
    }
}

/// Route tag, reply and sources, as printed by the REPL.
pub fn render_turn(t: &AgentTurn, quiet: bool) -> String {
    let r = &t.response;
    if quiet {
        return format!("{}\n\n", r.text);
    }
    let mut s = format!("[{}] reason={}", r.route, t.decision.reason);
    if let Some(score) = t.decision.relevance_score {
        s.push_str(&format!(" score={score:.4}"));
    }
    s.push('\n');
    s.push_str(&r.text);
    s.push('\n');
    if !r.provenance.is_empty() {
        s.push_str("sources:\n");
        for p in &r.provenance {
            s.push_str(&format!("  {} {} {:.4}\n", p.chunk_id, p.source_doc, p.score));
        }
    }
    s.push('\n');
    s
}
