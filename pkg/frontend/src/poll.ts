// Poll-based refresh: one in-flight read at a time, fixed 2 s cadence.
// A slow response never queues a second request, and the caller's render
// of already-displayed rounds is never blocked (the callback only fires
// with fresh complete views).

export interface Poller {
  stop(): void;
}

export function startPolling<T>(
  fetchView: () => Promise<T>,
  onView: (view: T) => void,
  onError: (error: unknown) => void,
  intervalMs = 2000,
): Poller {
  let stopped = false;
  let inFlight = false;

  const tick = async () => {
    if (stopped || inFlight) return;
    inFlight = true;
    try {
      const view = await fetchView();
      if (!stopped) onView(view);
    } catch (error) {
      if (!stopped) onError(error);
    } finally {
      inFlight = false;
    }
  };

  const timer = setInterval(tick, intervalMs);
  void tick();
  return {
    stop() {
      stopped = true;
      clearInterval(timer);
    },
  };
}
