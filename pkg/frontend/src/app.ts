import { ApiClient, ApiError } from './api.js';
import {
  ViewState,
  answersPayload,
  applyTurn,
  initialState,
  setFreeText,
  submitEnabled,
  toggleChip,
} from './state.js';
import { Handlers, render } from './view.js';

/** Wires state, view, and API. One session per app instance; submits are locked. */
export class App {
  readonly state: ViewState = initialState();
  /** In-flight request, exposed so scripted drivers can await turn boundaries. */
  pending: Promise<void> | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    this.render();
  }

  private handlers(): Handlers {
    return {
      onStart: (category) => {
        this.pending = this.start(category);
      },
      onToggle: (questionIndex, candidate) => {
        toggleChip(this.state, questionIndex, candidate);
        this.render();
      },
      onFreeText: (questionIndex, text) => {
        setFreeText(this.state, questionIndex, text);
        this.render();
      },
      onSubmit: () => {
        this.pending = this.submit();
      },
      onReset: () => {
        this.reset();
      },
    };
  }

  render(): void {
    render(this.root, this.state, this.handlers());
  }

  reset(): void {
    const session = this.state.session;
    if (session) void this.api.closeSession(session.session_id).catch(() => undefined);
    this.state.session = null;
    this.state.drafts = [];
    this.state.history = [];
    this.state.submitting = false;
    this.state.error = null;
    this.render();
  }

  async start(category: string): Promise<void> {
    this.state.error = null;
    try {
      const view = await this.api.createSession(category);
      applyTurn(this.state, view);
    } catch (error) {
      this.state.error = describeError(error);
    }
    this.render();
  }

  /** Optimistic lock: inputs freeze for the round trip; errors restore them. */
  async submit(): Promise<void> {
    const session = this.state.session;
    if (!session || !submitEnabled(this.state)) return;
    this.state.submitting = true;
    this.render();
    try {
      const view = await this.api.submitAnswers(session.session_id, answersPayload(this.state.drafts));
      this.state.submitting = false;
      applyTurn(this.state, view);
    } catch (error) {
      this.state.submitting = false;
      if (error instanceof ApiError && error.status === 409) {
        // Session closed under us: back to the start screen.
        this.state.session = null;
        this.state.drafts = [];
        this.state.history = [];
        this.state.error = 'session closed; start a new one';
      } else {
        this.state.error = describeError(error);
      }
    }
    this.render();
  }
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) {
    const detail = error.detail;
    if (typeof detail === 'string') return detail;
    if (detail && typeof detail === 'object' && 'error' in detail) {
      return String((detail as { error: unknown }).error);
    }
    return error.message;
  }
  return error instanceof Error ? error.message : String(error);
}
