import { ItemDiff, ViewState, itemDiff, submitEnabled } from './state.js';
import { Demand, ItemView, Question } from './types.js';

export interface Handlers {
  onStart(category: string): void;
  onToggle(questionIndex: number, candidate: string): void;
  onFreeText(questionIndex: number, text: string): void;
  onSubmit(): void;
  onReset(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderStart(root: HTMLElement, state: ViewState, handlers: Handlers): void {
  const panel = el('div', 'start-panel');
  panel.append(el('h1', 'title', 'clarishop'));
  panel.append(
    el('p', 'hint', 'Type a product category to start a clarification session.'),
  );
  const form = el('form', 'start-form');
  const input = el('input', 'category-input');
  input.placeholder = 'e.g. category00';
  input.name = 'category';
  const button = el('button', 'primary', 'Search');
  button.type = 'submit';
  form.append(input, button);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    if (input.value.trim()) handlers.onStart(input.value.trim());
  });
  panel.append(form);
  if (state.error) panel.append(el('div', 'banner error', state.error));
  root.append(panel);
}

function renderQuestionCard(
  question: Question,
  questionIndex: number,
  state: ViewState,
  handlers: Handlers,
): HTMLElement {
  const card = el('section', 'question-card');
  card.append(el('h3', 'question-text', question.text));
  const chips = el('div', 'chips');
  const draft = state.drafts[questionIndex];
  for (const candidate of question.candidates) {
    const chip = el('button', 'chip', candidate);
    chip.type = 'button';
    chip.dataset.question = String(questionIndex);
    chip.dataset.candidate = candidate;
    const active = draft !== undefined && draft.selected.includes(candidate);
    chip.setAttribute('aria-pressed', active ? 'true' : 'false');
    if (active) chip.classList.add('selected');
    chip.disabled = state.submitting;
    chip.addEventListener('click', () => handlers.onToggle(questionIndex, candidate));
    chips.append(chip);
  }
  card.append(chips);
  const freeText = el('input', 'free-text');
  freeText.placeholder = 'or type your own answer';
  freeText.value = draft ? draft.freeText : '';
  freeText.disabled = state.submitting;
  freeText.addEventListener('input', () => handlers.onFreeText(questionIndex, freeText.value));
  card.append(freeText);
  return card;
}

function renderItems(items: ItemView[]): HTMLElement {
  const grid = el('div', 'item-grid');
  if (items.length === 0) {
    grid.append(el('div', 'placeholder', 'no items yet'));
    return grid;
  }
  for (const item of items) {
    const card = el('article', 'item-card');
    card.dataset.itemId = item.id;
    card.append(el('h4', 'item-title', item.title));
    card.append(el('div', 'item-meta', `${item.id} · score ${item.score.toFixed(3)}`));
    const facetChips = el('div', 'facet-chips');
    for (const [facet, values] of Object.entries(item.facets)) {
      for (const value of values) {
        facetChips.append(el('span', 'facet-chip', `${facet}: ${value}`));
      }
    }
    card.append(facetChips);
    grid.append(card);
  }
  return grid;
}

function renderDemands(demands: Demand[]): HTMLElement {
  const panel = el('aside', 'demand-panel');
  panel.append(el('h3', undefined, 'Confirmed demands'));
  if (demands.length === 0) {
    panel.append(el('div', 'placeholder', 'nothing confirmed yet'));
    return panel;
  }
  const list = el('ul', 'demand-list');
  for (const demand of demands) {
    const parts = [...demand.chosen_options];
    if (demand.free_text) parts.push(`"${demand.free_text}"`);
    list.append(el('li', 'demand', `${demand.facet}: ${parts.join(', ')}`));
  }
  panel.append(list);
  return panel;
}

function diffLabel(diff: ItemDiff): string {
  return `+${diff.added.length} −${diff.removed.length} =${diff.kept.length}`;
}

function renderHistory(state: ViewState): HTMLElement {
  const panel = el('aside', 'history-panel');
  panel.append(el('h3', undefined, 'Turns'));
  const list = el('ol', 'history-list');
  state.history.forEach((view, index) => {
    const previous = index > 0 ? state.history[index - 1].items : [];
    const diff = itemDiff(previous, view.items);
    const entry = el('li', 'history-entry');
    entry.append(el('span', 'history-turn', `turn ${view.turn}`));
    entry.append(el('span', 'history-diff', diffLabel(diff)));
    list.append(entry);
  });
  panel.append(list);
  return panel;
}

function renderSession(root: HTMLElement, state: ViewState, handlers: Handlers): void {
  const session = state.session!;
  const layout = el('div', 'session-layout');
  const main = el('main', 'session-main');

  const header = el('header', 'session-header');
  header.append(el('h2', undefined, session.category));
  header.append(el('span', 'turn-label', `turn ${session.turn}`));
  const reset = el('button', 'link', 'new session');
  reset.type = 'button';
  reset.addEventListener('click', () => handlers.onReset());
  header.append(reset);
  main.append(header);

  if (state.error) main.append(el('div', 'banner error', state.error));
  if (session.state === 'closed') main.append(el('div', 'banner', 'session closed'));

  if (session.questions.length > 0) {
    const questions = el('div', 'question-list');
    session.questions.forEach((question, index) => {
      questions.append(renderQuestionCard(question, index, state, handlers));
    });
    main.append(questions);
    const submit = el('button', 'primary submit', state.submitting ? 'Sending…' : 'Send answers');
    submit.type = 'button';
    submit.disabled = !submitEnabled(state);
    submit.addEventListener('click', () => handlers.onSubmit());
    main.append(submit);
  } else {
    main.append(el('div', 'banner', 'No further questions; refine with a new session.'));
  }

  main.append(el('h3', 'items-heading', 'Matching items'));
  main.append(renderItems(session.items));

  const side = el('div', 'session-side');
  side.append(renderDemands(session.demands));
  side.append(renderHistory(state));

  layout.append(main, side);
  root.append(layout);
}

export function render(root: HTMLElement, state: ViewState, handlers: Handlers): void {
  root.textContent = '';
  if (!state.session) {
    renderStart(root, state, handlers);
  } else {
    renderSession(root, state, handlers);
  }
}
