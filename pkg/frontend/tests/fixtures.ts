import { SessionView } from '../src/types.js';

export function sessionFixture(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: 'sess-1',
    state: 'awaiting_answers',
    turn: 1,
    category: 'Sports shoes',
    questions: [
      {
        facet: 'applicable_scenario',
        text: 'In which scenario will you use the Sports shoes?',
        candidates: ['Outdoor', 'Brisk walking', 'Basketball', 'Dance', 'Travel', 'Other'],
      },
      {
        facet: 'style',
        text: 'Which style of Sports shoes do you like?',
        candidates: ['Versatile', 'Basketball', 'Breathable', 'Retro', 'Boxy', 'Other'],
      },
      {
        facet: 'color',
        text: 'Which color do you prefer for Sports shoes?',
        candidates: ['Light gray', 'White', 'Moonlight', 'Yellow', 'Rose red', 'Other'],
      },
    ],
    items: [
      {
        id: 'shoe-1',
        title: 'Sports shoes shoe-1',
        category: 'Sports shoes',
        score: 3.2,
        facets: { color: ['White'], style: ['Versatile'] },
      },
      {
        id: 'shoe-2',
        title: 'Sports shoes shoe-2',
        category: 'Sports shoes',
        score: 2.8,
        facets: { color: ['Yellow'] },
      },
    ],
    demands: [],
    ...overrides,
  };
}
