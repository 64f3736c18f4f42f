/**
 * Hand skeleton topology for the video overlay, keyed by joint count.
 * Matches the schemas the server negotiates; 46 (two hands) is out of
 * scope for live capture, so the overlay simply skips unknown counts.
 */

export interface HandTopology {
  bones: [number, number][];
  fingertips: number[];
}

export const TOPOLOGY: Record<number, HandTopology> = {
  // MediaPipe-style 21-landmark hand: wrist + 4 joints per finger.
  21: {
    bones: [
      [0, 1], [1, 2], [2, 3], [3, 4],
      [0, 5], [5, 6], [6, 7], [7, 8],
      [0, 9], [9, 10], [10, 11], [11, 12],
      [0, 13], [13, 14], [14, 15], [15, 16],
      [0, 17], [17, 18], [18, 19], [19, 20],
      [5, 9], [9, 13], [13, 17],
    ],
    fingertips: [4, 8, 12, 16, 20],
  },
  // 22-joint layout (wrist + palm + 4 joints per finger).
  22: {
    bones: [
      [0, 1], [1, 2], [2, 3], [3, 4], [4, 5],
      [1, 6], [6, 7], [7, 8], [8, 9],
      [1, 10], [10, 11], [11, 12], [12, 13],
      [1, 14], [14, 15], [15, 16], [16, 17],
      [1, 18], [18, 19], [19, 20], [20, 21],
    ],
    fingertips: [5, 9, 13, 17, 21],
  },
};

export const FINGER_COLORS = ["#f44", "#4f4", "#66f", "#ff4", "#f4f"];
