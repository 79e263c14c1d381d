//! Loaded dataset, run registry and the bounded result cache.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use chrono::{SecondsFormat, Utc};
use lru::LruCache;
use rptte_core::features::annotate_groups;
use rptte_core::fusion::detect_groups;
use rptte_core::{
    Dataset, FeatureConfig, FusionParams, Period, RptteGroup, TaxpayerNetwork, TradeNetwork,
    DEFAULT_MIN_RATIO,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tokio::sync::OnceCell;

use crate::config::ServiceConfig;
use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunHandle {
    pub run_id: String,
    pub status: RunStatus,
    pub created_at: String,
    pub params: FusionParams,
    pub n_groups: Option<usize>,
    pub error: Option<String>,
}

/// Everything a completed run produced.
#[derive(Debug)]
pub struct RunResult {
    pub params: FusionParams,
    pub net: TaxpayerNetwork,
    pub trade: TradeNetwork,
    /// Sorted by group id.
    pub groups: Vec<RptteGroup>,
    by_id: HashMap<String, usize>,
    by_member: HashMap<String, usize>,
}

impl RunResult {
    pub fn group(&self, group_id: &str) -> Option<&RptteGroup> {
        self.by_id.get(group_id).map(|&i| &self.groups[i])
    }

    pub fn group_of(&self, entity_id: &str) -> Option<&RptteGroup> {
        self.by_member.get(entity_id).map(|&i| &self.groups[i])
    }
}

type Slot = Arc<OnceCell<Arc<RunResult>>>;

pub struct AppState {
    pub config: ServiceConfig,
    pub dataset: Dataset,
    pub fingerprint: String,
    /// Unpruned ownership network of the dataset.
    pub raw_net: TaxpayerNetwork,
    default_net: OnceLock<TaxpayerNetwork>,
    runs: Mutex<HashMap<String, RunHandle>>,
    cache: Mutex<LruCache<String, Arc<RunResult>>>,
    inflight: Mutex<HashMap<String, Slot>>,
    computations: AtomicUsize,
}

impl AppState {
    pub fn new(dataset: Dataset, config: ServiceConfig) -> Self {
        let capacity = NonZeroUsize::new(config.cache_capacity.max(1)).expect("non-zero");
        AppState {
            fingerprint: dataset.fingerprint(),
            raw_net: TaxpayerNetwork::from_dataset(&dataset),
            dataset,
            config,
            default_net: OnceLock::new(),
            runs: Mutex::new(HashMap::new()),
            cache: Mutex::new(LruCache::new(capacity)),
            inflight: Mutex::new(HashMap::new()),
            computations: AtomicUsize::new(0),
        }
    }

    pub fn features(&self) -> FeatureConfig {
        self.config.features()
    }

    pub fn range(&self) -> Period {
        Period {
            start: self.dataset.manifest.date_from,
            end: self.dataset.manifest.date_to,
        }
    }

    /// Network pruned at the default threshold, for lookups outside a run.
    pub fn default_net(&self) -> &TaxpayerNetwork {
        self.default_net
            .get_or_init(|| self.raw_net.prune(DEFAULT_MIN_RATIO))
    }

    /// Number of pipeline executions so far; coalesced and cached requests
    /// do not count.
    pub fn computations(&self) -> usize {
        self.computations.load(Ordering::SeqCst)
    }

    pub fn run_id(&self, params: &FusionParams) -> String {
        let mut h = Sha256::new();
        h.update(self.fingerprint.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(params).expect("params serialize"));
        format!("r{}", &hex::encode(h.finalize())[..32])
    }

    /// Field errors for params submitted to this dataset.
    pub fn check_params(&self, params: &FusionParams) -> Vec<(String, String)> {
        let mut errs: Vec<(String, String)> = params
            .field_errors()
            .into_iter()
            .map(|(f, m)| (f.to_string(), m))
            .collect();
        let range = self.range();
        if !range.contains(params.period_start) {
            errs.push((
                "period_start".into(),
                format!("outside dataset range {} .. {}", range.start, range.end),
            ));
        }
        if !range.contains(params.period_end) {
            errs.push((
                "period_end".into(),
                format!("outside dataset range {} .. {}", range.start, range.end),
            ));
        }
        errs
    }

    pub fn handle(&self, run_id: &str) -> Option<RunHandle> {
        self.runs.lock().expect("run registry").get(run_id).cloned()
    }

    /// Registers (or finds) the run for `params` and makes sure its result
    /// exists. Identical concurrent submissions share one computation.
    pub async fn submit(self: &Arc<Self>, params: FusionParams) -> Result<RunHandle, ApiError> {
        let errs = self.check_params(&params);
        if !errs.is_empty() {
            return Err(ApiError::invalid_params(errs));
        }
        let run_id = self.run_id(&params);
        {
            let mut runs = self.runs.lock().expect("run registry");
            runs.entry(run_id.clone()).or_insert_with(|| RunHandle {
                run_id: run_id.clone(),
                status: RunStatus::Running,
                created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
                params,
                n_groups: None,
                error: None,
            });
        }
        // A failed computation is recorded on the handle itself.
        let _ = self.result(&run_id).await;
        Ok(self.handle(&run_id).expect("registered above"))
    }

    /// Result of a registered run, recomputed if it was evicted.
    pub async fn result(self: &Arc<Self>, run_id: &str) -> Result<Arc<RunResult>, ApiError> {
        let params = match self.handle(run_id) {
            Some(h) => h.params,
            None => return Err(ApiError::not_found(format!("unknown run `{run_id}`"))),
        };
        let slot = {
            let mut inflight = self.inflight.lock().expect("inflight map");
            if let Some(hit) = self.cache.lock().expect("run cache").get(run_id) {
                return Ok(hit.clone());
            }
            inflight
                .entry(run_id.to_string())
                .or_insert_with(|| Arc::new(OnceCell::new()))
                .clone()
        };
        let state = Arc::clone(self);
        let computed = slot
            .get_or_try_init(|| async move {
                tokio::task::spawn_blocking(move || state.compute(params))
                    .await
                    .map_err(|e| ApiError::internal(format!("run task failed: {e}")))?
            })
            .await;
        let outcome = match computed {
            Ok(r) => Ok(r.clone()),
            Err(e) => Err(e),
        };
        {
            let mut inflight = self.inflight.lock().expect("inflight map");
            if let Ok(r) = &outcome {
                self.cache
                    .lock()
                    .expect("run cache")
                    .put(run_id.to_string(), r.clone());
            }
            if inflight.get(run_id).is_some_and(|s| Arc::ptr_eq(s, &slot)) {
                inflight.remove(run_id);
            }
        }
        let mut runs = self.runs.lock().expect("run registry");
        if let Some(h) = runs.get_mut(run_id) {
            match &outcome {
                Ok(r) => {
                    h.status = RunStatus::Done;
                    h.n_groups = Some(r.groups.len());
                    h.error = None;
                }
                Err(e) => {
                    h.status = RunStatus::Failed;
                    h.error = Some(e.body.message.clone());
                }
            }
        }
        outcome
    }

    fn compute(&self, params: FusionParams) -> Result<Arc<RunResult>, ApiError> {
        self.computations.fetch_add(1, Ordering::SeqCst);
        let net = self.raw_net.prune(params.min_ratio);
        let trade = TradeNetwork::build(&self.dataset.invoices, &net);
        let mut groups = detect_groups(&net, &trade, &params)?;
        annotate_groups(&mut groups, &trade, params.period(), self.features())?;
        let by_id = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.group_id.clone(), i))
            .collect();
        let by_member = groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.nodes.iter().map(move |n| (n.id.clone(), i)))
            .collect();
        Ok(Arc::new(RunResult {
            params,
            net,
            trade,
            groups,
            by_id,
            by_member,
        }))
    }

    /// Baseline run over the whole dataset range used by the summary.
    pub fn baseline_params(&self) -> FusionParams {
        FusionParams::new(
            self.range(),
            self.config.summary_max_txn_chain,
            self.config.summary_max_ctrl_chain,
        )
    }

    /// Drops every cached result; registered runs stay addressable.
    pub fn clear_cache(&self) {
        let _guard = self.inflight.lock().expect("inflight map");
        self.cache.lock().expect("run cache").clear();
    }

    pub fn cached_runs(&self) -> usize {
        self.cache.lock().expect("run cache").len()
    }
}
