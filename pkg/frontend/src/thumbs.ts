import type { Thumb } from './types.js';

/**
 * Expand a grayscale 0-255 integer array into RGBA bytes for ImageData.
 * Values are passed through untouched so the canvas shows exactly what
 * the server sent.
 */
export function grayToRgba(pixels: number[]) {
  // explicit ArrayBuffer keeps the result assignable to ImageData
  const rgba = new Uint8ClampedArray(new ArrayBuffer(pixels.length * 4));
  for (let i = 0; i < pixels.length; i++) {
    const v = pixels[i];
    rgba[4 * i] = v;
    rgba[4 * i + 1] = v;
    rgba[4 * i + 2] = v;
    rgba[4 * i + 3] = 255;
  }
  return rgba;
}

/** Draw a server thumbnail payload onto a canvas 1:1. */
export function drawThumb(canvas: HTMLCanvasElement, thumb: Thumb): void {
  canvas.width = thumb.width;
  canvas.height = thumb.height;
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return;
  }
  const image = new ImageData(grayToRgba(thumb.pixels), thumb.width, thumb.height);
  ctx.putImageData(image, 0, 0);
}
