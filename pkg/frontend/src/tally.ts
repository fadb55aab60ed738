// Running success tallies per policy, fed exclusively by server responses.

import type { TrialResponse } from './types.js';

export interface PolicyTally {
  trials: number;
  successes: number;
}

export class Tally {
  private counts: Record<'text' | 'grounded', PolicyTally> = {
    text: { trials: 0, successes: 0 },
    grounded: { trials: 0, successes: 0 },
  };

  record(trial: TrialResponse): void {
    const entry = this.counts[trial.policy];
    entry.trials += 1;
    if (trial.success) entry.successes += 1;
  }

  get(policy: 'text' | 'grounded'): PolicyTally {
    return { ...this.counts[policy] };
  }

  rate(policy: 'text' | 'grounded'): number | null {
    const { trials, successes } = this.counts[policy];
    return trials === 0 ? null : successes / trials;
  }

  reset(): void {
    this.counts = {
      text: { trials: 0, successes: 0 },
      grounded: { trials: 0, successes: 0 },
    };
  }
}
