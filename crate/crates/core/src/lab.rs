//! Out-line inspection lab.
//!
//! Parts submitted at index `t` come back at `t + delay` with their exact
//! hidden label. Destructive inspection consumes the part.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::metrics::CostModel;
use crate::sim::{Label, Part};

#[derive(Debug, Clone, PartialEq)]
pub struct InspectionTicket {
    pub part: u64,
    pub submitted_at: u64,
    pub due: u64,
    pub destructive: bool,
    label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InspectionResult {
    pub part: u64,
    pub label: Label,
    pub submitted_at: u64,
    pub returned_at: u64,
    pub destroyed: bool,
}

impl InspectionResult {
    /// Cost charged for this inspection under `costs`.
    pub fn charged(&self, costs: &CostModel) -> f64 {
        costs.inspect
            + if self.destroyed {
                costs.destroyed_part
            } else {
                0.0
            }
    }
}

#[derive(Debug, Clone)]
pub struct Lab {
    delay: u64,
    destructive: bool,
    queue: BTreeMap<(u64, u64), InspectionTicket>,
    seq: u64,
    seen: HashSet<u64>,
    returned: u64,
}

impl Lab {
    pub fn new(delay: u64, destructive: bool) -> Self {
        Lab {
            delay,
            destructive,
            queue: BTreeMap::new(),
            seq: 0,
            seen: HashSet::new(),
            returned: 0,
        }
    }

    pub fn delay(&self) -> u64 {
        self.delay
    }

    pub fn submit(&mut self, part: &Part, t: u64) -> Result<InspectionTicket> {
        if !self.seen.insert(part.index) {
            return Err(Error::Usage(format!(
                "part {} was already submitted for inspection",
                part.index
            )));
        }
        let ticket = InspectionTicket {
            part: part.index,
            submitted_at: t,
            due: t + self.delay,
            destructive: self.destructive,
            label: part.true_label(),
        };
        self.queue.insert((ticket.due, self.seq), ticket.clone());
        self.seq += 1;
        Ok(ticket)
    }

    pub fn was_submitted(&self, part: u64) -> bool {
        self.seen.contains(&part)
    }

    /// Removes and returns every ticket due at or before `t`, ordered by due
    /// time and then submission order.
    pub fn collect_due(&mut self, t: u64) -> Vec<InspectionResult> {
        let mut out = Vec::new();
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ticket = entry.remove();
            out.push(InspectionResult {
                part: ticket.part,
                label: ticket.label,
                submitted_at: ticket.submitted_at,
                returned_at: ticket.due,
                destroyed: ticket.destructive,
            });
        }
        self.returned += out.len() as u64;
        out
    }

    /// Returns everything still queued.
    pub fn flush(&mut self) -> Vec<InspectionResult> {
        self.collect_due(u64::MAX)
    }

    pub fn outstanding(&self) -> usize {
        self.queue.len()
    }

    pub fn submitted(&self) -> u64 {
        self.seen.len() as u64
    }

    pub fn returned(&self) -> u64 {
        self.returned
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ProcessParameters;

    fn part(index: u64, label: Label) -> Part {
        Part::new(index, ProcessParameters(vec![0.0]), 0, label)
    }

    #[test]
    fn zero_delay_due_now() {
        let mut lab = Lab::new(0, true);
        let t = lab.submit(&part(3, Label::Ok), 3).unwrap();
        assert_eq!(t.due, 3);
        assert!(t.destructive);
        assert_eq!(lab.collect_due(3).len(), 1);
    }

    #[test]
    fn due_is_submit_plus_delay() {
        let mut lab = Lab::new(50, false);
        assert_eq!(lab.submit(&part(10, Label::Ok), 10).unwrap().due, 60);
    }

    #[test]
    fn duplicate_submission_rejected() {
        let mut lab = Lab::new(5, true);
        lab.submit(&part(1, Label::Ok), 1).unwrap();
        assert!(matches!(
            lab.submit(&part(1, Label::Ok), 2),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn empty_queue() {
        assert!(Lab::new(5, true).collect_due(100).is_empty());
    }

    #[test]
    fn boundary_collection() {
        let mut lab = Lab::new(50, true);
        lab.submit(&part(10, Label::Nok), 10).unwrap();
        lab.submit(&part(11, Label::Ok), 11).unwrap();
        let got = lab.collect_due(60);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].part, 10);
        assert_eq!(got[0].label, Label::Nok);
        assert_eq!(got[0].returned_at, 60);
        assert_eq!(lab.outstanding(), 1);
    }

    #[test]
    fn fifo_among_equal_due() {
        let mut lab = Lab::new(0, true);
        for i in [7, 3, 5] {
            lab.submit(&part(i, Label::Ok), 4).unwrap();
        }
        lab.submit(&part(1, Label::Ok), 2).unwrap();
        let order: Vec<u64> = lab.flush().iter().map(|r| r.part).collect();
        assert_eq!(order, vec![1, 7, 3, 5]);
    }

    #[test]
    fn charged_cost() {
        let costs = CostModel {
            inspect: 2.0,
            destroyed_part: 5.0,
            false_negative: 100.0,
        };
        let r = InspectionResult {
            part: 0,
            label: Label::Ok,
            submitted_at: 0,
            returned_at: 0,
            destroyed: true,
        };
        assert_eq!(r.charged(&costs), 7.0);
        assert_eq!(
            InspectionResult {
                destroyed: false,
                ..r
            }
            .charged(&costs),
            2.0
        );
    }
}
