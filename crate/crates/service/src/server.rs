use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use milrw_core::session::SystemClock;
use tokio::net::TcpListener;

use crate::api::{router, AppState};
use crate::config::ServiceConfig;
use crate::workbench::Workbench;

/// Serve until `shutdown` resolves, sweeping idle sessions in the background.
pub async fn serve_on(
    listener: TcpListener,
    workbench: Arc<Workbench>,
    admin_token: Option<String>,
    idle_timeout: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let sweeper = {
        let wb = workbench.clone();
        let every = (idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let wb = wb.clone();
                let timeout_ms = idle_timeout.as_millis() as u64;
                let swept = tokio::task::spawn_blocking(move || {
                    let closed = wb.expire_idle(timeout_ms)?;
                    wb.write_snapshot()?;
                    Ok::<_, crate::error::ServiceError>(closed)
                })
                .await;
                match swept {
                    Ok(Ok(closed)) if !closed.is_empty() => tracing::info!(count = closed.len(), "closed idle sessions"),
                    Ok(Err(e)) => tracing::warn!("idle sweep failed: {e}"),
                    _ => {}
                }
            }
        })
    };
    let app = router(AppState { workbench: workbench.clone(), admin_token });
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    if let Err(e) = workbench.write_snapshot() {
        tracing::warn!("final snapshot failed: {e}");
    }
    Ok(result?)
}

pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let workbench = Arc::new(Workbench::from_config(&cfg, Arc::new(SystemClock))?);
    let listener = TcpListener::bind(&cfg.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, arms = cfg.arms.len(), "listening");
    if cfg.admin_token.is_none() {
        tracing::warn!("no admin token configured; admin endpoints are disabled");
    }
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    serve_on(listener, workbench, cfg.admin_token.clone(), Duration::from_secs(cfg.idle_timeout_secs), shutdown).await
}
