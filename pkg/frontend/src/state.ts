import { AnswerPayload, ItemView, Question, SessionView } from './types.js';

/** Draft answer for one question card: toggled chips plus a free-text field. */
export interface QuestionDraft {
  selected: string[];
  freeText: string;
}

export interface ViewState {
  session: SessionView | null;
  drafts: QuestionDraft[];
  /** Append-only turn history; replaying its payloads reproduces the item lists. */
  history: SessionView[];
  submitting: boolean;
  error: string | null;
}

export function initialState(): ViewState {
  return { session: null, drafts: [], history: [], submitting: false, error: null };
}

export function freshDrafts(questions: Question[]): QuestionDraft[] {
  return questions.map(() => ({ selected: [], freeText: '' }));
}

export function applyTurn(state: ViewState, view: SessionView): void {
  state.session = view;
  state.drafts = freshDrafts(view.questions);
  state.history.push(view);
  state.error = null;
}

export function toggleChip(state: ViewState, questionIndex: number, candidate: string): void {
  const draft = state.drafts[questionIndex];
  if (!draft || state.submitting) return;
  const at = draft.selected.indexOf(candidate);
  if (at >= 0) {
    draft.selected.splice(at, 1);
  } else {
    draft.selected.push(candidate);
  }
}

export function setFreeText(state: ViewState, questionIndex: number, text: string): void {
  const draft = state.drafts[questionIndex];
  if (!draft || state.submitting) return;
  draft.freeText = text;
}

/** Submit needs every question answered by a chip or free text, and no request in flight. */
export function submitEnabled(state: ViewState): boolean {
  if (!state.session || state.submitting || state.session.state === 'closed') return false;
  return state.drafts.every((draft) => draft.selected.length > 0 || draft.freeText.trim() !== '');
}

export function answersPayload(drafts: QuestionDraft[]): AnswerPayload[] {
  return drafts.map((draft, index) => {
    const payload: AnswerPayload = { question_index: index, selected: [...draft.selected] };
    const text = draft.freeText.trim();
    if (text !== '') payload.free_text = text;
    return payload;
  });
}

export interface ItemDiff {
  added: string[];
  removed: string[];
  kept: string[];
}

export function itemDiff(previous: ItemView[], next: ItemView[]): ItemDiff {
  const before = new Set(previous.map((item) => item.id));
  const after = new Set(next.map((item) => item.id));
  return {
    added: next.filter((item) => !before.has(item.id)).map((item) => item.id),
    removed: previous.filter((item) => !after.has(item.id)).map((item) => item.id),
    kept: next.filter((item) => before.has(item.id)).map((item) => item.id),
  };
}
