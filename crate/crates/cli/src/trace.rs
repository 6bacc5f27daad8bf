//! Command traces: newline-delimited envelopes whose `ts_ms` is the offset
//! in milliseconds from the start of the trace.
//!
//! Blank lines and `#` comments are ignored, except `# expect STATUS [CODE]`,
//! which sets the expected ack of the envelope on the next line. Without
//! one, SUCCESS and SUPERSEDED are both accepted.

use greensim_messaging::{decode_text, encode_text, Ack, AckStatus, Envelope, Kind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    Ok,
    Exactly { status: AckStatus, code: Option<String> },
}

impl Expect {
    pub fn matches(&self, ack: &Ack) -> bool {
        match self {
            Expect::Ok => matches!(ack.status, AckStatus::Success | AckStatus::Superseded),
            Expect::Exactly { status, code } => ack.status == *status && (code.is_none() || ack.code() == code.as_deref()),
        }
    }
}

impl std::fmt::Display for Expect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expect::Ok => f.write_str("SUCCESS|SUPERSEDED"),
            Expect::Exactly { status, code: None } => f.write_str(status.as_str()),
            Expect::Exactly { status, code: Some(c) } => write!(f, "{} {c}", status.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub at_ms: u64,
    pub envelope: Envelope,
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceStep>, TraceError> {
    let mut steps = Vec::new();
    let mut expect: Option<Expect> = None;
    let mut last_ms = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| TraceError { line, message };
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(comment) = s.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("expect") {
                let status: AckStatus = words
                    .next()
                    .ok_or_else(|| err("expect needs a status".into()))?
                    .parse()
                    .map_err(|e| err(format!("{e:?}")))?;
                let code = words.next().map(str::to_string);
                expect = Some(Expect::Exactly { status, code });
            }
            continue;
        }
        let envelope = decode_text(s).map_err(|e| err(e.to_string()))?;
        if !matches!(envelope.kind, Kind::Cmd | Kind::Sub | Kind::Unsub | Kind::Ping) {
            return Err(err(format!("{} envelopes cannot appear in a trace", envelope.kind.as_str())));
        }
        if envelope.ts_ms < last_ms {
            return Err(err(format!("ts_ms {} goes backwards from {last_ms}", envelope.ts_ms)));
        }
        last_ms = envelope.ts_ms;
        steps.push(TraceStep {
            at_ms: envelope.ts_ms,
            envelope,
            expect: expect.take().unwrap_or(Expect::Ok),
        });
    }
    Ok(steps)
}

pub fn write_trace(steps: &[TraceStep]) -> String {
    let mut out = String::new();
    for step in steps {
        if let Expect::Exactly { .. } = step.expect {
            out.push_str(&format!("# expect {}\n", step.expect));
        }
        let env = step.envelope.clone().with_seq(step.envelope.seq, step.at_ms);
        out.push_str(&encode_text(&env));
        out.push('\n');
    }
    out
}
