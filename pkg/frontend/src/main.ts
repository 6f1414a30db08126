import { AuditApiClient } from "./api.js";
import { AuditApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new AuditApp(root, new AuditApiClient(""));
  void app.init();
}
