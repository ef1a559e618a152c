// Display formatting. Every formatter takes the raw API number and nothing
// else, so a rendered figure is always traceable to one response field.

export function formatScore(value: number): string {
  return value.toFixed(4);
}

export function formatProbability(value: number): string {
  return value.toFixed(3);
}

export function formatPercentWidth(value: number): string {
  return `${Math.round(Math.max(0, Math.min(1, value)) * 100)}%`;
}

export function stackArrow(stack: string[]): string {
  return stack.length ? `[${stack.length}] ${stack[stack.length - 1]}` : "[]";
}

export function verdictLabel(verdict: string): string {
  switch (verdict) {
    case "knowledge_dependent":
      return "knowledge dependent";
    case "prior_knowledge_suspect":
      return "prior knowledge suspect";
    case "inconclusive":
      return "inconclusive";
    default:
      return verdict;
  }
}
