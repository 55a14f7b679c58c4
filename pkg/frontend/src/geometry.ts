/** Canvas <-> image coordinate mapping, exact to the nearest pixel. */

export type CanvasGeometry = {
  canvasSize: number; // square canvas, CSS pixels
  imageSize: number;  // square image, image pixels
};

/** Canvas click position -> the image pixel containing it (exact inversion
 *  of the canvas upscale). Returns null outside the image area. */
export function canvasToImage(
  geo: CanvasGeometry,
  canvasX: number,
  canvasY: number,
): { x: number; y: number } | null {
  const scale = geo.imageSize / geo.canvasSize;
  const x = Math.floor(canvasX * scale);
  const y = Math.floor(canvasY * scale);
  if (x < 0 || y < 0 || x >= geo.imageSize || y >= geo.imageSize) return null;
  return { x, y };
}

/** Image pixel center -> canvas position (for marker rendering). */
export function imageToCanvas(
  geo: CanvasGeometry,
  imageX: number,
  imageY: number,
): { x: number; y: number } {
  const scale = geo.canvasSize / geo.imageSize;
  return { x: (imageX + 0.5) * scale, y: (imageY + 0.5) * scale };
}
