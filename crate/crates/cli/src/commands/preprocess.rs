use crate::cache::CacheStats;
use crate::config::ExperimentConfig;
use crate::data;
use crate::error::Result;

/// Fills the cache for every manifest scan.
pub fn cmd_preprocess(config: &ExperimentConfig) -> Result<CacheStats> {
    let records = data::records(config)?;
    let cache = data::open_cache(config);
    let refs: Vec<_> = records.iter().collect();
    data::inputs(config, &cache, &refs)?;
    let stats = cache.stats();
    log::info!(
        "preprocessed {} scans into {} (hit rate {:.1}%)",
        refs.len(),
        cache.root().display(),
        100.0 * stats.hit_rate()
    );
    Ok(stats)
}
