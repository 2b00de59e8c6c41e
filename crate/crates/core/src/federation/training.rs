use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::hyper::TrainHyper;
use super::protocol::{aggregate, apply_ldp, sample_participants, LdpConfig, UploadRecord};
use super::trace::{ArchivePolicy, RoundTrace};
use crate::analysis::{deviation_point, hit_at_k, DeviationReport, HitEval, HitProtocol};
use crate::data::{sample_negatives, DatasetSplit};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{local_train, Defense, ModelConfig, PrivateParams, PublicParams};
use crate::numerics::RngStream;

/// One seed per randomness family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Leave-one-out tie breaking.
    pub split: u64,
    /// Initialization, participants, negatives, shuffling and LDP noise.
    pub train: u64,
    /// Hit@K candidate lists.
    pub eval: u64,
    /// Attacker randomness.
    pub attack: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 1,
            train: 2,
            eval: 3,
            attack: 4,
        }
    }
}

/// Round counter, the server's public parameters and the clients' private
/// embeddings. `private[k]` belongs to `split.clients[k]`; only client-side
/// code reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub round: usize,
    pub public: PublicParams,
    pub private: Vec<PrivateParams>,
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub round: usize,
    pub participants: Vec<usize>,
    /// Post-LDP uploads in participant order, as the server received them.
    pub uploads: Vec<UploadRecord>,
    /// Mean over participants of their last-epoch per-sample loss.
    pub train_loss: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub train_loss: f64,
    pub val_hit10: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub initial: GlobalState,
    pub state: GlobalState,
    pub traces: Vec<RoundTrace>,
    pub curve: Vec<CurvePoint>,
    pub deviation: DeviationReport,
    /// Round after which early stopping fired.
    pub stopped_early: Option<usize>,
}

impl TrainingRun {
    /// Writes `round, train_loss, val_hit10` rows.
    pub fn write_curve_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.curve {
            out.serialize(p).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

/// A federated training setup over one split.
#[derive(Debug, Clone)]
pub struct Federation<'a> {
    pub split: &'a DatasetSplit,
    pub model: &'a ModelConfig,
    pub hyper: &'a TrainHyper,
    pub ldp: LdpConfig,
    pub defense: Option<Defense>,
    pub seeds: Seeds,
    pub exec: Execution,
    /// Candidate protocol for the validation Hit@10 curve.
    pub eval_protocol: HitProtocol,
}

impl<'a> Federation<'a> {
    pub fn new(split: &'a DatasetSplit, model: &'a ModelConfig, hyper: &'a TrainHyper) -> Self {
        Federation {
            split,
            model,
            hyper,
            ldp: LdpConfig::OFF,
            defense: None,
            seeds: Seeds::default(),
            exec: Execution::default(),
            eval_protocol: HitProtocol::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.hyper.validate()?;
        self.ldp.validate()?;
        if let Some(d) = self.defense {
            if !(d.mu >= 0.0 && d.mu.is_finite()) {
                return Err(Error::Argument(format!("μ must be >= 0, got {}", d.mu)));
            }
        }
        if self.split.clients.is_empty() {
            return Err(Error::Argument("split has no clients".into()));
        }
        let m = self.hyper.participants_for(self.split.clients.len());
        if m > self.split.clients.len() {
            return Err(Error::Argument(format!(
                "participants {m} exceeds {} clients",
                self.split.clients.len()
            )));
        }
        Ok(())
    }

    pub fn init_state(&self) -> Result<GlobalState> {
        let mut rng = RngStream::new(self.seeds.train, "global-init");
        let public = PublicParams::init(self.model, self.split.item_count(), &mut rng)?;
        let private = self
            .split
            .clients
            .iter()
            .map(|c| PrivateParams::init(self.model, &mut RngStream::new(self.seeds.train, format!("client-init:{}", c.user))))
            .collect();
        Ok(GlobalState {
            round: 0,
            public,
            private,
        })
    }

    /// One protocol round: sample participants, train each locally on fresh
    /// negatives, perturb the uploads, aggregate. On error the state is left
    /// untouched.
    pub fn run_round(&self, state: &mut GlobalState) -> Result<RoundOutput> {
        let t = state.round;
        let users = self.split.users();
        let m = self.hyper.participants_for(users.len());
        let participants =
            sample_participants(&users, m, &mut RngStream::new(self.seeds.train, format!("participants:{t}")))?;
        let indices: Vec<usize> = participants
            .iter()
            .map(|&u| self.split.client_index(u).expect("participant is a client"))
            .collect();
        let seed = self.seeds.train;
        let global = &state.public;
        let private = &state.private;

        let results = self.exec.map(&indices, |&k| -> Result<(usize, PrivateParams, UploadRecord, f64, usize)> {
            let mut client = self.split.clients[k].clone();
            let uid = client.user;
            client.negatives = sample_negatives(
                &client,
                self.split.item_count(),
                self.hyper.neg_ratio,
                self.hyper.shortfall,
                &mut RngStream::new(seed, format!("neg-sample:{uid}:{t}")),
            )?;
            let outcome = local_train(
                self.model,
                &client,
                global,
                &private[k],
                self.hyper,
                self.defense,
                &mut RngStream::new(seed, format!("shuffle:{uid}:{t}")),
            )?;
            let record = apply_ldp(
                UploadRecord::new(t, uid, outcome.upload),
                &self.ldp,
                &mut RngStream::new(seed, format!("ldp:{uid}:{t}")),
            )?;
            Ok((k, outcome.private, record, outcome.mean_loss, outcome.clamped))
        });

        let mut updates = Vec::with_capacity(results.len());
        let mut uploads = Vec::with_capacity(results.len());
        let mut loss = 0.0;
        let mut clamped = 0;
        for r in results {
            let (k, p, record, l, c) = r?;
            updates.push((k, p));
            uploads.push(record);
            loss += l;
            clamped += c;
        }
        state.public = aggregate(&uploads, &state.public, self.hyper.aggregation)?;
        for (k, p) in updates {
            state.private[k] = p;
        }
        state.round += 1;
        if clamped > 0 {
            debug!("round {t}: {clamped} scores clamped in the loss");
        }
        Ok(RoundOutput {
            round: t,
            participants,
            uploads,
            train_loss: loss / indices.len() as f64,
            clamped,
        })
    }

    pub fn validation_hit(&self, state: &GlobalState) -> Result<f64> {
        let eval = HitEval {
            protocol: self.eval_protocol,
            ..HitEval::validation(self.seeds.eval)
        };
        Ok(hit_at_k(self.model, &state.public, &state.private, self.split, &eval, self.exec)?.mean)
    }

    /// Runs up to `global_rounds` rounds with patience-based early stopping on
    /// validation Hit@10, archiving the rounds selected by `archive`.
    pub fn run_training(&self, archive: &ArchivePolicy) -> Result<TrainingRun> {
        self.validate()?;
        let initial = self.init_state()?;
        let mut state = initial.clone();
        let mut traces = Vec::new();
        let mut curve = Vec::new();
        let mut deviation = DeviationReport {
            rounds: vec![deviation_point(
                0,
                &state.private,
                &state.public.items,
                &initial.private,
                &initial.public.items,
            )?],
        };
        let mut best = f64::NEG_INFINITY;
        let mut since_best = 0;
        let mut stopped_early = None;
        let last = self.hyper.global_rounds.saturating_sub(1);

        for t in 0..self.hyper.global_rounds {
            let before = match archive {
                ArchivePolicy::None => None,
                _ => Some(state.public.clone()),
            };
            let out = self.run_round(&mut state)?;
            let val = self.validation_hit(&state)?;
            curve.push(CurvePoint {
                round: t,
                train_loss: out.train_loss,
                val_hit10: val,
            });
            deviation.rounds.push(deviation_point(
                state.round,
                &state.private,
                &state.public.items,
                &initial.private,
                &initial.public.items,
            )?);
            info!("round {t}: train loss {:.5}, val hit@10 {val:.4}", out.train_loss);

            if val > best {
                best = val;
                since_best = 0;
            } else {
                since_best += 1;
            }
            let stop = self.hyper.patience.is_some_and(|p| since_best >= p) && t < last;

            if let Some(before) = before {
                let keep = match archive {
                    ArchivePolicy::Last => true,
                    other => other.keeps(t, last),
                };
                if keep {
                    if *archive == ArchivePolicy::Last {
                        traces.clear();
                    }
                    traces.push(RoundTrace {
                        round: t,
                        model: self.model.clone(),
                        before,
                        uploads: out.uploads,
                        after: state.public.clone(),
                    });
                }
            }
            if stop {
                info!("early stop after round {t}: no validation improvement in {since_best} rounds");
                stopped_early = Some(t);
                break;
            }
        }
        Ok(TrainingRun {
            initial,
            state,
            traces,
            curve,
            deviation,
            stopped_early,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{leave_one_out_split, parse_dataset, ColumnMapping};
    use crate::federation::Aggregation;
    use crate::models::ModelKind;
    use std::path::Path;

    /// 6 users with disjoint item sets: user u interacts with items 6k + u.
    pub(crate) fn toy_split() -> DatasetSplit {
        let mut text = String::new();
        let mut ts = 0;
        for u in 0..6 {
            for i in (0..6 + u % 3).map(|k| 6 * k + u) {
                ts += 1;
                text.push_str(&format!("{u},{i},{ts}\n"));
            }
        }
        let ds = parse_dataset(text.as_bytes(), Path::new("toy"), &ColumnMapping::csv(false, true)).unwrap();
        leave_one_out_split(&ds, &mut RngStream::new(1, "split"))
    }

    fn hyper(rounds: usize) -> TrainHyper {
        TrainHyper {
            lr: 0.01,
            local_epochs: 2,
            batch_size: 8,
            global_rounds: rounds,
            patience: None,
            ..TrainHyper::default()
        }
    }

    #[test]
    fn zero_rounds_returns_initial_state() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = hyper(0);
        let run = Federation::new(&split, &cfg, &h).run_training(&ArchivePolicy::All).unwrap();
        assert_eq!(run.state, run.initial);
        assert!(run.traces.is_empty());
        assert!(run.curve.is_empty());
    }

    #[test]
    fn zero_local_epochs_is_a_no_op_round() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = TrainHyper {
            local_epochs: 0,
            ..hyper(1)
        };
        let fed = Federation::new(&split, &cfg, &h);
        let mut state = fed.init_state().unwrap();
        let before = state.clone();
        fed.run_round(&mut state).unwrap();
        assert_eq!(state.public, before.public);
        assert_eq!(state.private, before.private);
    }

    #[test]
    fn single_participant_round_copies_its_rows() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = TrainHyper {
            participants: Some(1),
            ..hyper(1)
        };
        let fed = Federation::new(&split, &cfg, &h);
        let mut state = fed.init_state().unwrap();
        let before = state.public.clone();
        let out = fed.run_round(&mut state).unwrap();
        let up = &out.uploads[0];
        for (k, &i) in up.item_ids.iter().enumerate() {
            assert_eq!(state.public.items.row(i), up.rows.row(k));
        }
        for i in (0..split.item_count()).filter(|i| up.item_ids.binary_search(i).is_err()) {
            assert_eq!(state.public.items.row(i), before.items.row(i));
        }
        assert_eq!(state.public.dense, up.dense);
    }

    #[test]
    fn uploads_touch_positives_and_that_rounds_negatives() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::LightGcn, 4, 4);
        let h = hyper(1);
        let fed = Federation::new(&split, &cfg, &h);
        let mut state = fed.init_state().unwrap();
        let out = fed.run_round(&mut state).unwrap();
        for up in &out.uploads {
            let client = split.client(up.user).unwrap();
            let negs = sample_negatives(
                client,
                split.item_count(),
                h.neg_ratio,
                h.shortfall,
                &mut RngStream::new(fed.seeds.train, format!("neg-sample:{}:0", up.user)),
            )
            .unwrap();
            let mut expected: Vec<usize> = client.positives.iter().chain(&negs).copied().collect();
            expected.sort_unstable();
            assert_eq!(up.item_ids, expected);
        }
    }

    #[test]
    fn repeated_runs_are_identical_and_sequential_matches_parallel() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = hyper(3);
        let mut fed = Federation::new(&split, &cfg, &h);
        fed.ldp = LdpConfig::new(0.01);
        let a = fed.run_training(&ArchivePolicy::All).unwrap();
        let b = fed.run_training(&ArchivePolicy::All).unwrap();
        fed.exec = Execution::Sequential;
        let c = fed.run_training(&ArchivePolicy::All).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.state, c.state);
        assert_eq!(a.traces, c.traces);
        assert!(a.traces.iter().all(|t| t.uploads.iter().all(|u| u.post_ldp)));
    }

    #[test]
    fn replaying_uploads_reproduces_each_round() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = hyper(4);
        let run = Federation::new(&split, &cfg, &h).run_training(&ArchivePolicy::All).unwrap();
        assert_eq!(run.traces.len(), 4);
        for w in run.traces.windows(2) {
            assert_eq!(w[0].after, w[1].before);
        }
        for t in &run.traces {
            assert_eq!(aggregate(&t.uploads, &t.before, Aggregation::Mean).unwrap(), t.after);
        }
        assert_eq!(run.traces.last().unwrap().after, run.state.public);
    }

    #[test]
    fn last_policy_keeps_only_the_final_round() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = hyper(3);
        let run = Federation::new(&split, &cfg, &h).run_training(&ArchivePolicy::Last).unwrap();
        assert_eq!(run.traces.len(), 1);
        assert_eq!(run.traces[0].round, 2);
        assert_eq!(run.deviation.rounds.len(), 4);
        assert_eq!((run.deviation.rounds[0].user, run.deviation.rounds[0].item), (0.0, 0.0));
    }

    #[test]
    fn early_stopping_honors_patience() {
        let split = toy_split();
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let h = TrainHyper {
            local_epochs: 0,
            patience: Some(2),
            ..hyper(10)
        };
        let run = Federation::new(&split, &cfg, &h).run_training(&ArchivePolicy::None).unwrap();
        assert_eq!(run.stopped_early, Some(2));
        assert_eq!(run.curve.len(), 3);
    }
}
