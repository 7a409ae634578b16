//! Rolling out one ranking episode: sample a document, record the step,
//! drop the document from the candidate set, repeat until the SERP is full.

use rand::Rng;

use crate::data::{Document, Query};
use crate::policy::{self, Policy};
use crate::{Error, Result, Scalar};

/// One ranking decision. Time step `t` starts at 0, rank `k = t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    /// Rank position `k` of the placed document, starting at 1.
    pub rank: usize,
    /// Document ordinals still unranked when the step began (the state).
    pub state_before: Vec<usize>,
    /// Ordinal of the document selected by the policy.
    pub chosen: usize,
}

/// A displayed ranking plus, once the user has reacted, its click vector.
///
/// Steps index into the query's candidate list, so the episode borrows the
/// query instead of copying documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode<'q, T> {
    pub query: &'q Query<T>,
    pub steps: Vec<EpisodeStep>,
    pub clicks: Option<Vec<bool>>,
}

impl<'q, T> Episode<'q, T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The document placed at time step `t`.
    pub fn document_at(&self, t: usize) -> &Document<T> {
        &self.query.candidates[self.steps[t].chosen]
    }

    /// Relevance grades of the displayed list, top to bottom.
    pub fn displayed_grades(&self) -> Vec<u8> {
        self.steps
            .iter()
            .map(|s| self.query.candidates[s.chosen].relevance)
            .collect()
    }

    /// Attach user feedback; must cover every step.
    pub fn set_clicks(&mut self, clicks: Vec<bool>) -> Result<()> {
        if clicks.len() != self.steps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.steps.len(),
                got: clicks.len(),
            });
        }
        self.clicks = Some(clicks);
        Ok(())
    }

    pub fn clicks(&self) -> Result<&[bool]> {
        self.clicks.as_deref().ok_or(Error::ClicksMissing)
    }
}

/// Build a ranking of `min(serp_size, candidates)` documents by repeatedly
/// sampling from the policy's softmax over the remaining candidates.
/// Clicks are left unset.
pub fn run_episode<'q, T: Scalar>(
    policy: &Policy<T>,
    query: &'q Query<T>,
    serp_size: usize,
    rng: &mut impl Rng,
) -> Result<Episode<'q, T>> {
    if query.candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if serp_size == 0 {
        return Err(Error::InvalidConfig("serp_size must be >= 1".into()));
    }
    let depth = serp_size.min(query.candidates.len());
    let mut remaining: Vec<usize> = (0..query.candidates.len()).collect();
    let mut steps = Vec::with_capacity(depth);
    for t in 0..depth {
        let dist = policy::action_distribution_subset(policy, &query.candidates, &remaining)?;
        let pos = policy::sample_action(&dist, rng);
        let chosen = remaining[pos];
        steps.push(EpisodeStep {
            rank: t + 1,
            state_before: remaining.clone(),
            chosen,
        });
        remaining.remove(pos);
    }
    Ok(Episode {
        query,
        steps,
        clicks: None,
    })
}
