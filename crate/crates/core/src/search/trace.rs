use std::path::Path;

use crate::error::{Error, Result};

use super::Move;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    Move,
    /// Every neighbor was tabu or infeasible; the inner loop ended early.
    NoAdmissible,
    Diversify,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Move => "move",
            EventKind::NoAdmissible => "no_admissible",
            EventKind::Diversify => "diversify",
        }
    }
}

/// One line of the decision trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Value of the move counter after the event.
    pub iteration: usize,
    pub kind: EventKind,
    pub chosen: Option<Move>,
    /// Utility of the current solution after the event.
    pub utility: f64,
    pub incumbent: f64,
    /// Better-ranked neighbors were skipped because they were tabu.
    pub tabu_hit: bool,
    /// The executed move was tabu and allowed by aspiration.
    pub aspiration: bool,
    /// Users reassigned by a diversification step.
    pub diversified: Vec<usize>,
}

pub fn write_trace_csv(path: impl AsRef<Path>, users: usize, trace: &[TraceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "event",
        "subject",
        "from_cell",
        "to_cell",
        "utility",
        "incumbent",
        "tabu_hit",
        "aspiration",
        "diversified_users",
    ])?;
    for r in trace {
        let (subject, from, to) = match r.chosen {
            Some(Move::Reassign { user, from, to }) => {
                ((user + 1).to_string(), (from + 1).to_string(), (to + 1).to_string())
            }
            Some(Move::Reallocate) => ((users + 1).to_string(), "0".into(), "0".into()),
            None => (String::new(), String::new(), String::new()),
        };
        let diversified = r
            .diversified
            .iter()
            .map(|k| (k + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        w.write_record([
            r.iteration.to_string(),
            r.kind.as_str().to_string(),
            subject,
            from,
            to,
            r.utility.to_string(),
            r.incumbent.to_string(),
            r.tabu_hit.to_string(),
            r.aspiration.to_string(),
            diversified,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
