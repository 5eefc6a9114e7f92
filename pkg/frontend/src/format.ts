// Documented display formatting. Tests compare rendered output against
// API values passed through exactly these functions.

/** Dollar amounts: "$" + fixed 2 decimals. */
export function money(x: number): string {
  return `$${x.toFixed(2)}`;
}

/** Prices in $/MWh: fixed 2 decimals with the unit suffix. */
export function price(x: number): string {
  return `${x.toFixed(2)} $/MWh`;
}

/** Energy in MWh: fixed 3 decimals with the unit suffix. */
export function energy(x: number): string {
  return `${x.toFixed(3)} MWh`;
}

/** Hour index 0..23 as a wall-clock label. */
export function hourLabel(t: number): string {
  const whole = Math.floor(t);
  const frac = t - whole;
  const mins = Math.round(frac * 60);
  return `${String(whole).padStart(2, "0")}:${String(mins).padStart(2, "0")}`;
}

/** Content hashes: first 12 hex characters with an ellipsis. */
export function shortHash(h: string): string {
  return h.length > 12 ? `${h.slice(0, 12)}…` : h;
}

export function escapeHtml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
