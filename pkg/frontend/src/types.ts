export type ClassCode = 0 | 1 | 2;

export const CLASS_NAMES: Record<ClassCode, string> = {
  0: 'spatial',
  1: 'appearance',
  2: 'motion',
};

export const CLASS_COLORS: Record<ClassCode, string> = {
  0: '#c0504d',
  1: '#4f81bd',
  2: '#9bbb59',
};

export interface Scores {
  spatial: number;
  appearance: number;
  motion: number;
}

export interface QueueItem {
  video_id: string;
  label: number;
  scores: Scores;
  ranks: Record<string, number>;
  within_class_rank: number;
  confidence: number;
  thumb_frames: number[];
}

export interface ClassProgress {
  class_name: string;
  total: number;
  reviewed: number;
  pending: number;
}

export interface Progress {
  cohort_id: string;
  classes: Record<string, ClassProgress>;
  pending_total: number;
  verdicts: Record<string, string>;
}

export interface SplitManifest {
  cohort_id: string;
  train: string[];
  val: string[];
  pending_review: string[];
  seed: number;
  created_at?: string;
}

export interface FinalizeResponse {
  manifest: SplitManifest;
  labels: Record<string, number>;
}

export interface Thumb {
  video_id: string;
  frame: number;
  width: number;
  height: number;
  pixels: number[];
}

export type VerdictKind = 'accept' | 'reject' | 'reassign';
