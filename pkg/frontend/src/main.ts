import { Session } from './session';
import { mount } from './ui';
import './style.css';

const session = new Session();
const root = document.getElementById('app')!;
mount(root, session);

// ids live in the URL so a reload rebuilds the same view from the API
session.subscribe((view) => {
  const params = new URLSearchParams(window.location.search);
  if (view.targetId) params.set('target', view.targetId);
  else params.delete('target');
  const query = params.toString();
  const next = query ? `?${query}` : window.location.pathname;
  window.history.replaceState(null, '', next);
});

const initial = new URLSearchParams(window.location.search).get('target');
if (initial) void session.openTarget(initial);
