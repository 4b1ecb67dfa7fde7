"""Write the CSV drive files used by formation_from_files.cfg.

    python demos/make_inputs.py

The waveforms are the synthetic stand-ins used when a config says
``synthetic``; replace these files with measured data to drive a real shot.
"""

from pathlib import Path

from axifem.scenario import (
    MachineGeometry,
    save_psi_table,
    synthetic_coil_current,
    synthetic_gun_voltage,
)

out = Path(__file__).parent / "inputs"
out.mkdir(exist_ok=True)

synthetic_gun_voltage(16e3).save(out / "gun_voltage.csv")
synthetic_coil_current(20e-6, 150e-6, name="I_lev").save(out / "I_lev.csv")
synthetic_coil_current(10e-6, 40e-6, name="I_comp").save(out / "I_comp.csv")

machine = MachineGeometry()
mesh = machine.mesh(0.025)
b = mesh.boundary_nodes
for name, table in zip(("psi_main", "psi_lev", "psi_comp"), machine.coil_tables(mesh.r[b], mesh.z[b])):
    save_psi_table(out / f"{name}.csv", b, table)
print(f"wrote drive files for {len(b)} boundary nodes to {out}")
