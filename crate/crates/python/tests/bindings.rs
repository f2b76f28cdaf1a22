use pyo3::prelude::*;
use vistaloop_py::vistaloop_py;

fn run(code: &std::ffi::CStr) {
    pyo3::append_to_inittab!(vistaloop_py);
    Python::initialize();
    Python::attach(|py| {
        if let Err(e) = py.run(code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn demo_round_trip_through_python() {
    run(c"
import vistaloop_py as vl
s = vl.Scenario.demo()
assert (s.num_objects, s.num_views, s.num_frames) == (5, 6, 8)
v = vl.render(s)
assert v.size == (128, 128)
assert len(v.instance_ids(0, 0)) == 128 * 128
assert v == vl.render(s)
assert v != vl.render(s, seed=7)
r = vl.evaluate(v, s)
assert r['s_macro'] >= 0.9
s.add_object_fault('wrong_color', 3)
_, audit = vl.run_closed_loop(s)
assert audit['status'] == 'passed'
assert audit['iterations'][0]['decision']['flagged_objects'] == [3]
again = vl.Scenario.parse(s.to_text())
assert again.to_text() == s.to_text()
for bad in (lambda: s.add_object_fault('wrong_color', 42),
            lambda: s.add_object_fault('melt', 0),
            lambda: vl.run_closed_loop(s, max_iters=0),
            lambda: v.pixels(6, 0)):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError('expected ValueError')
try:
    vl.Scenario.load('/nonexistent.json')
except OSError:
    pass
else:
    raise AssertionError('expected OSError')
");
}
