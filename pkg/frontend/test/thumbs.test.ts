import { describe, expect, it } from 'vitest';

import { grayToRgba } from '../src/thumbs.js';

describe('thumbnail pixel expansion', () => {
  it('passes gray values through untouched', () => {
    const rgba = grayToRgba([0, 128, 255]);
    expect(rgba).toHaveLength(12);
    expect(Array.from(rgba.slice(0, 4))).toEqual([0, 0, 0, 255]);
    expect(Array.from(rgba.slice(4, 8))).toEqual([128, 128, 128, 255]);
    expect(Array.from(rgba.slice(8, 12))).toEqual([255, 255, 255, 255]);
  });

  it('renders a mid-gray fixture as exactly 128', () => {
    const pixels = new Array(64 * 64).fill(128);
    const rgba = grayToRgba(pixels);
    expect(rgba[0]).toBe(128); // pixel (0,0) red channel
    expect(rgba[1]).toBe(128);
    expect(rgba[2]).toBe(128);
    expect(rgba[3]).toBe(255);
  });
});
