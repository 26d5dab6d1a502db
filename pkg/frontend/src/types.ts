/** Wire types of the session API; field names match the service payloads. */

export interface Question {
  facet: string;
  text: string;
  candidates: string[];
}

export interface ItemView {
  id: string;
  title: string;
  category: string;
  score: number;
  facets: Record<string, string[]>;
}

export interface Demand {
  turn: number;
  facet: string;
  question_text: string;
  chosen_options: string[];
  free_text: string | null;
}

export interface SessionView {
  session_id: string;
  state: 'awaiting_answers' | 'closed';
  turn: number;
  category: string;
  questions: Question[];
  items: ItemView[];
  demands: Demand[];
}

export interface AnswerPayload {
  question_index: number;
  selected: string[];
  free_text?: string;
}

/** Throws when a payload does not look like a session view; the caller keeps its state. */
export function validateSessionView(payload: unknown): SessionView {
  const view = payload as SessionView;
  if (
    !view ||
    typeof view.session_id !== 'string' ||
    typeof view.turn !== 'number' ||
    !Array.isArray(view.questions) ||
    !Array.isArray(view.items) ||
    !Array.isArray(view.demands)
  ) {
    throw new Error('malformed session payload');
  }
  for (const question of view.questions) {
    if (typeof question.text !== 'string' || !Array.isArray(question.candidates)) {
      throw new Error('malformed question payload');
    }
  }
  for (const item of view.items) {
    if (typeof item.id !== 'string' || typeof item.title !== 'string') {
      throw new Error('malformed item payload');
    }
  }
  return view;
}
