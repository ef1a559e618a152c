// The client-side ablation mask: the set of memory ids the next run should
// exclude. Session-scoped (survives page navigation, not the browser tab)
// and materialized server-side only when a run is submitted.

const STORAGE_KEY = "cac.ablation-mask";

export type StorageLike = Pick<Storage, "getItem" | "setItem" | "removeItem">;

export class AblationMask {
  private ids: Set<string>;
  baseRunRef: string | null;
  private readonly storage: StorageLike | null;

  constructor(storage: StorageLike | null = defaultStorage()) {
    this.storage = storage;
    this.ids = new Set();
    this.baseRunRef = null;
    this.load();
  }

  private load(): void {
    if (!this.storage) return;
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return;
    try {
      const parsed = JSON.parse(raw) as { ids?: string[]; baseRunRef?: string | null };
      this.ids = new Set(parsed.ids ?? []);
      this.baseRunRef = parsed.baseRunRef ?? null;
    } catch {
      this.ids = new Set();
    }
  }

  private persist(): void {
    this.storage?.setItem(
      STORAGE_KEY,
      JSON.stringify({ ids: [...this.ids].sort(), baseRunRef: this.baseRunRef }),
    );
  }

  has(id: string): boolean {
    return this.ids.has(id);
  }

  toggle(id: string): boolean {
    if (this.ids.has(id)) {
      this.ids.delete(id);
    } else {
      this.ids.add(id);
    }
    this.persist();
    return this.ids.has(id);
  }

  clear(): void {
    this.ids.clear();
    this.baseRunRef = null;
    this.storage?.removeItem(STORAGE_KEY);
  }

  /** Drop ids that no longer exist in the loaded KB snapshot. */
  prune(knownIds: ReadonlySet<string>): void {
    let changed = false;
    for (const id of this.ids) {
      if (!knownIds.has(id)) {
        this.ids.delete(id);
        changed = true;
      }
    }
    if (changed) this.persist();
  }

  get size(): number {
    return this.ids.size;
  }

  /** Sorted ids, exactly the POST /api/runs payload. */
  removedDmIds(): string[] {
    return [...this.ids].sort();
  }
}

function defaultStorage(): StorageLike | null {
  try {
    return typeof sessionStorage === "undefined" ? null : sessionStorage;
  } catch {
    return null;
  }
}
