import { ApiError, AuditApiClient } from "./api.js";
import type { MembershipReport, ModelConfig } from "./types.js";
import { renderBusy, renderErrorBanner, renderModelSelector, renderReportCard } from "./view.js";

export type AppStatus = "idle" | "loading-models" | "auditing" | "error";

interface ReportItem {
  imageName: string;
  report?: MembershipReport;
  error?: string;
}

// Controller for the single-page demonstrator. All scores come from the API;
// audits run sequentially per image and the in-flight state blocks duplicate
// submissions.
export class AuditApp {
  status: AppStatus = "idle";
  models: ModelConfig[] = [];
  selectedModel = "";
  items: ReportItem[] = [];
  errorMessage = "";

  private readonly doc: Document;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: AuditApiClient,
  ) {
    this.doc = root.ownerDocument;
  }

  async init(): Promise<void> {
    this.status = "loading-models";
    this.errorMessage = "";
    this.render();
    try {
      this.models = await this.client.listModels();
      this.status = "idle";
    } catch (err) {
      this.status = "error";
      this.errorMessage = describe(err);
    }
    this.render();
  }

  /** Re-query the registry (e.g. after a service restart). */
  async refreshModels(): Promise<void> {
    await this.init();
  }

  async submitFiles(files: ArrayLike<File>): Promise<void> {
    if (this.status === "auditing" || files.length === 0) {
      return;
    }
    this.status = "auditing";
    this.render();
    for (let i = 0; i < files.length; i++) {
      const file = files[i] as File;
      try {
        const report = await this.client.auditImage(file, this.selectedModel || undefined);
        this.items.unshift({ imageName: file.name, report });
      } catch (err) {
        this.items.unshift({ imageName: file.name, error: describe(err) });
      }
      this.render();
    }
    this.status = "idle";
    this.render();
  }

  render(): void {
    const doc = this.doc;
    this.root.textContent = "";

    if (this.status === "error") {
      this.root.appendChild(renderErrorBanner(doc, this.errorMessage, () => {
        void this.init();
      }));
      return;
    }
    if (this.status === "loading-models") {
      this.root.appendChild(renderBusy(doc, "Contacting audit service…"));
      return;
    }

    this.root.appendChild(renderModelSelector(doc, this.models, this.selectedModel,
      (id) => {
        this.selectedModel = id;
      }));

    const form = doc.createElement("form");
    form.className = "upload-form";
    const input = doc.createElement("input");
    input.type = "file";
    input.id = "upload-input";
    input.accept = "image/png,image/x-portable-graymap";
    input.multiple = true;
    const button = doc.createElement("button");
    button.type = "submit";
    button.id = "submit-button";
    button.textContent = this.status === "auditing" ? "Auditing…" : "Audit images";
    button.disabled = this.status === "auditing";
    form.appendChild(input);
    form.appendChild(button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitFiles(input.files ?? []);
    });
    this.root.appendChild(form);

    if (this.status === "auditing") {
      this.root.appendChild(renderBusy(doc, "Auditing images…"));
    }

    const reports = doc.createElement("div");
    reports.id = "reports";
    for (const item of this.items) {
      if (item.report) {
        reports.appendChild(renderReportCard(doc, item.imageName, item.report));
      } else {
        reports.appendChild(renderErrorBanner(doc,
          `${item.imageName}: ${item.error ?? "unknown error"}`));
      }
    }
    this.root.appendChild(reports);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.errorCode}: ${err.message}`;
  }
  return String(err);
}
