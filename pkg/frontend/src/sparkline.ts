/** SVG path for a distance-decay curve, anchored to the [0, max] range so
 *  the starting value 1.0 is always visible at the same height. */

export function sparklinePath(values: number[], width = 160, height = 36, pad = 2): string {
  if (values.length === 0) return "";
  const max = Math.max(1.0, ...values);
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const x = (i: number) => pad + (values.length === 1 ? 0 : (i / (values.length - 1)) * innerW);
  const y = (v: number) => pad + innerH - (v / max) * innerH;
  let d = `M ${x(0).toFixed(2)} ${y(values[0]).toFixed(2)}`;
  for (let i = 1; i < values.length; i++) {
    d += ` L ${x(i).toFixed(2)} ${y(values[i]).toFixed(2)}`;
  }
  return d;
}

export function sparklineSvg(values: number[], width = 160, height = 36): string {
  const path = sparklinePath(values, width, height);
  return (
    `<svg width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">` +
    `<path d="${path}" fill="none" stroke="currentColor" stroke-width="1.5"/>` +
    `</svg>`
  );
}
